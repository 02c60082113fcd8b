#include "balance/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "balance/linalg.hpp"

namespace balance {

namespace {

using nlohmann::json;

Vec3 read_vec3(const json& node, const std::string& key, const std::string& owner) {
  if (!node.contains(key)) {
    throw ModelError(owner + ": missing '" + key + "'");
  }
  const json& arr = node.at(key);
  if (!arr.is_array() || arr.size() != 3) {
    throw ModelError(owner + ": '" + key + "' must be an array of 3 numbers");
  }
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

Vec3 read_vec3_or_zero(const json& node, const std::string& key, const std::string& owner) {
  return node.contains(key) ? read_vec3(node, key, owner) : Vec3::Zero();
}

Pose read_origin(const json& node, const std::string& owner) {
  return {rpy_to_rotation(read_vec3_or_zero(node, "origin_rpy", owner)),
          read_vec3_or_zero(node, "origin_xyz", owner)};
}

std::string read_name(const json& node, const std::string& what) {
  if (!node.contains("name") || !node.at("name").is_string()) {
    throw ModelError(what + " without a string 'name'");
  }
  return node.at("name").get<std::string>();
}

}  // namespace

RobotModel::RobotModel(std::string name, std::vector<Link> links, std::vector<Joint> joints,
                       std::vector<Frame> frames, int base_link)
    : name_(std::move(name)),
      links_(std::move(links)),
      joints_(std::move(joints)),
      frames_(std::move(frames)),
      base_link_(base_link) {
  const int nl = static_cast<int>(links_.size());
  if (base_link_ < 0 || base_link_ >= nl) {
    throw ModelError("base link index out of range");
  }
  for (const Link& link : links_) {
    if (!(link.mass > 0.0) || !std::isfinite(link.mass)) {
      throw ModelError("link '" + link.name + "': mass must be positive");
    }
    if (!link.inertia.isApprox(link.inertia.transpose(), 1e-9)) {
      throw ModelError("link '" + link.name + "': inertia is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(link.inertia, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
      throw ModelError("link '" + link.name + "': inertia is not positive definite");
    }
    total_mass_ += link.mass;
  }

  parent_joint_.assign(nl, -1);
  for (int j = 0; j < dof(); ++j) {
    Joint& joint = joints_[j];
    if (joint.parent == joint.child) {
      throw ModelError("joint '" + joint.name + "': cycle (parent is its own child)");
    }
    if (joint.child == base_link_) {
      throw ModelError("joint '" + joint.name + "': cycle (base link '" + links_[base_link_].name +
                       "' cannot be a child)");
    }
    if (parent_joint_[joint.child] != -1) {
      throw ModelError("joint '" + joint.name + "': link '" + links_[joint.child].name +
                       "' already has a parent joint (cycle)");
    }
    const double axis_norm = joint.axis.norm();
    if (std::abs(axis_norm - 1.0) > 1e-6) {
      throw ModelError("joint '" + joint.name + "': axis must have unit norm");
    }
    joint.axis /= axis_norm;
    parent_joint_[joint.child] = j;
  }

  // Breadth-first from the base; anything left unreached sits on a cycle.
  std::vector<char> reached(nl, 0);
  reached[base_link_] = 1;
  support_.assign(nl, {});
  std::vector<int> frontier{base_link_};
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int link : frontier) {
      for (int j = 0; j < dof(); ++j) {
        if (joints_[j].parent == link) {
          const int child = joints_[j].child;
          traversal_.push_back(j);
          reached[child] = 1;
          support_[child] = support_[link];
          support_[child].push_back(j);
          next.push_back(child);
        }
      }
    }
    frontier = std::move(next);
  }
  for (int l = 0; l < nl; ++l) {
    if (!reached[l]) {
      throw ModelError("link '" + links_[l].name + "' is not connected to the base (cycle or orphan)");
    }
  }
  for (const Frame& frame : frames_) {
    if (frame.link < 0 || frame.link >= nl) {
      throw ModelError("frame '" + frame.name + "': unknown link");
    }
  }
}

std::optional<int> RobotModel::find_link(std::string_view name) const {
  for (int i = 0; i < static_cast<int>(links_.size()); ++i) {
    if (links_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<int> RobotModel::find_frame(std::string_view name) const {
  for (int i = 0; i < static_cast<int>(frames_.size()); ++i) {
    if (frames_[i].name == name) return i;
  }
  return std::nullopt;
}

int RobotModel::frame_index(std::string_view name) const {
  if (auto idx = find_frame(name)) return *idx;
  throw ModelError("unknown frame '" + std::string(name) + "'");
}

RobotModel load_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model parse error: ") + e.what());
  }
  try {
    const std::string model_name = doc.value("name", std::string("unnamed"));
    if (!doc.contains("links") || !doc.at("links").is_array() || doc.at("links").empty()) {
      throw ModelError("model '" + model_name + "': 'links' must be a non-empty array");
    }

    std::vector<Link> links;
    for (const json& node : doc.at("links")) {
      Link link;
      link.name = read_name(node, "link");
      if (!node.contains("mass")) throw ModelError("link '" + link.name + "': missing 'mass'");
      link.mass = node.at("mass").get<double>();
      link.com = read_vec3_or_zero(node, "com", "link '" + link.name + "'");
      const json& inertia = node.at("inertia");
      if (!inertia.is_array() || inertia.size() != 9) {
        throw ModelError("link '" + link.name + "': 'inertia' must hold 9 numbers (row-major)");
      }
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) link.inertia(r, c) = inertia[3 * r + c].get<double>();
      links.push_back(std::move(link));
    }

    auto link_index = [&](const std::string& name, const std::string& owner) {
      for (int i = 0; i < static_cast<int>(links.size()); ++i)
        if (links[i].name == name) return i;
      throw ModelError(owner + ": unknown link '" + name + "'");
    };

    const std::string base_name = doc.value("base_link", links.front().name);
    const int base = link_index(base_name, "model '" + model_name + "' base_link");

    std::vector<Joint> joints;
    if (doc.contains("joints")) {
      for (const json& node : doc.at("joints")) {
        Joint joint;
        joint.name = read_name(node, "joint");
        const std::string owner = "joint '" + joint.name + "'";
        joint.parent = link_index(node.at("parent").get<std::string>(), owner + " parent");
        joint.child = link_index(node.at("child").get<std::string>(), owner + " child");
        joint.origin = read_origin(node, owner);
        joint.axis = read_vec3(node, "axis", owner);
        joints.push_back(std::move(joint));
      }
    }

    std::vector<Frame> frames;
    if (doc.contains("frames")) {
      for (const json& node : doc.at("frames")) {
        Frame frame;
        frame.name = read_name(node, "frame");
        frame.link = link_index(node.at("link").get<std::string>(), "frame '" + frame.name + "'");
        frame.offset = read_origin(node, "frame '" + frame.name + "'");
        frames.push_back(std::move(frame));
      }
    }
    return RobotModel(model_name, std::move(links), std::move(joints), std::move(frames), base);
  } catch (const json::exception& e) {
    throw ModelError(std::string("model schema error: ") + e.what());
  }
}

RobotModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ModelError("cannot open model file '" + path.string() + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_model(buffer.str());
}

RobotState RobotState::zero(const RobotModel& model) {
  RobotState s;
  s.joint_positions = VecX::Zero(model.dof());
  s.joint_velocities = VecX::Zero(model.dof());
  return s;
}

VecX RobotState::velocity() const {
  VecX nu(6 + joint_velocities.size());
  nu << base_linear_velocity, base_angular_velocity, joint_velocities;
  return nu;
}

void RobotState::set_velocity(const VecX& nu) {
  base_linear_velocity = nu.head<3>();
  base_angular_velocity = nu.segment<3>(3);
  joint_velocities = nu.tail(nu.size() - 6);
}

void RobotState::validate(const RobotModel& model) const {
  if (joint_positions.size() != model.dof() || joint_velocities.size() != model.dof()) {
    throw StateError("state dimension does not match model dof " + std::to_string(model.dof()));
  }
  if (std::abs(base_orientation.norm() - 1.0) > 1e-9) {
    throw StateError("base quaternion is not unit norm");
  }
  if (!base_position.allFinite() || !joint_positions.allFinite() || !joint_velocities.allFinite() ||
      !base_linear_velocity.allFinite() || !base_angular_velocity.allFinite() ||
      !base_orientation.coeffs().allFinite()) {
    throw StateError("state contains non-finite values");
  }
}

RobotState retract(const RobotState& state, const VecX& delta) {
  RobotState out = state;
  out.base_position += delta.head<3>();
  const Mat3 r = so3_exp(delta.segment<3>(3)) * state.base_rotation();
  out.base_orientation = Eigen::Quaterniond(r).normalized();
  out.joint_positions += delta.tail(delta.size() - 6);
  return out;
}

}  // namespace balance
