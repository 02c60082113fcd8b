#include "balance/multibody.hpp"

#include "balance/linalg.hpp"

namespace balance {

namespace {

// Spatial motion cross product v x m, (angular, linear) layout.
Vec6 motion_cross(const Vec6& v, const Vec6& m) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(m.head<3>());
  out.tail<3>() = v.head<3>().cross(m.tail<3>()) + v.tail<3>().cross(m.head<3>());
  return out;
}

// Spatial force cross product v x* f.
Vec6 force_cross(const Vec6& v, const Vec6& f) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(f.head<3>()) + v.tail<3>().cross(f.tail<3>());
  out.tail<3>() = v.head<3>().cross(f.tail<3>());
  return out;
}

Vec6 joint_subspace(const Kinematics& kin, int joint) {
  Vec6 s;
  s << kin.joint_axis[joint], kin.joint_point[joint].cross(kin.joint_axis[joint]);
  return s;
}

// Maps the mixed base velocity (pdot_B, omega_B) to the base spatial velocity.
Mat6 base_subspace(const Vec3& base_position) {
  Mat6 s = Mat6::Zero();
  s.block<3, 3>(0, 3) = Mat3::Identity();
  s.block<3, 3>(3, 0) = Mat3::Identity();
  s.block<3, 3>(3, 3) = skew(base_position);
  return s;
}

Mat6 spatial_inertia(const Link& link, const Pose& pose) {
  const Vec3 c = pose * link.com;
  const Mat3 ic = pose.rotation * link.inertia * pose.rotation.transpose();
  const Mat3 sc = skew(c);
  Mat6 out;
  out.block<3, 3>(0, 0) = ic + link.mass * sc * sc.transpose();
  out.block<3, 3>(0, 3) = link.mass * sc;
  out.block<3, 3>(3, 0) = link.mass * sc.transpose();
  out.block<3, 3>(3, 3) = link.mass * Mat3::Identity();
  return out;
}

int frame_index_checked(const RobotModel& model, int frame) {
  if (frame < 0 || frame >= static_cast<int>(model.frames().size())) {
    throw ModelError("frame index out of range");
  }
  return frame;
}

}  // namespace

Kinematics compute_kinematics(const RobotModel& model, const RobotState& state) {
  state.validate(model);
  const int nl = static_cast<int>(model.links().size());
  Kinematics kin;
  kin.link_pose.resize(nl);
  kin.link_velocity.assign(nl, Vec6::Zero());
  kin.link_bias.assign(nl, Vec6::Zero());
  kin.joint_axis.resize(model.dof());
  kin.joint_point.resize(model.dof());

  const int base = model.base_link();
  const Vec3& pb = state.base_position;
  const Vec3& vb = state.base_linear_velocity;
  const Vec3& wb = state.base_angular_velocity;
  kin.link_pose[base] = state.base_pose();
  kin.link_velocity[base] << wb, vb + pb.cross(wb);
  kin.link_bias[base] << Vec3::Zero(), vb.cross(wb);

  for (int j : model.traversal()) {
    const Joint& joint = model.joints()[j];
    const Pose joint_frame = kin.link_pose[joint.parent] * joint.origin;
    kin.joint_axis[j] = joint_frame.rotation * joint.axis;
    kin.joint_point[j] = joint_frame.position;
    const Pose motion{Eigen::AngleAxisd(state.joint_positions(j), joint.axis).toRotationMatrix(),
                      Vec3::Zero()};
    kin.link_pose[joint.child] = joint_frame * motion;

    const Vec6 s = joint_subspace(kin, j);
    const double qd = state.joint_velocities(j);
    kin.link_velocity[joint.child] = kin.link_velocity[joint.parent] + s * qd;
    kin.link_bias[joint.child] =
        kin.link_bias[joint.parent] + motion_cross(kin.link_velocity[joint.child], s) * qd;
  }

  kin.link_com.resize(nl);
  for (int l = 0; l < nl; ++l) {
    kin.link_com[l] = kin.link_pose[l] * model.links()[l].com;
    kin.com += model.links()[l].mass * kin.link_com[l];
  }
  kin.com /= model.total_mass();
  return kin;
}

Pose frame_pose(const RobotModel& model, const Kinematics& kin, int frame) {
  const Frame& f = model.frames()[frame_index_checked(model, frame)];
  return kin.link_pose[f.link] * f.offset;
}

std::map<std::string, Pose> forward_kinematics(const RobotModel& model, const RobotState& state) {
  const Kinematics kin = compute_kinematics(model, state);
  std::map<std::string, Pose> poses;
  for (std::size_t l = 0; l < model.links().size(); ++l) {
    poses[model.links()[l].name] = kin.link_pose[l];
  }
  for (std::size_t f = 0; f < model.frames().size(); ++f) {
    poses[model.frames()[f].name] = frame_pose(model, kin, static_cast<int>(f));
  }
  return poses;
}

Vec3 center_of_mass(const RobotModel& model, const RobotState& state) {
  return compute_kinematics(model, state).com;
}

MatX frame_jacobian(const RobotModel& model, const RobotState& state, const std::string& frame) {
  const int idx = model.frame_index(frame);
  return frame_jacobian(model, state, compute_kinematics(model, state), idx);
}

MatX frame_jacobian(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                    int frame) {
  const int link = model.frames()[frame_index_checked(model, frame)].link;
  const Vec3 p = frame_pose(model, kin, frame).position;
  MatX jac = MatX::Zero(6, 6 + model.dof());
  jac.block<3, 3>(0, 0) = Mat3::Identity();
  jac.block<3, 3>(0, 3) = -skew(p - state.base_position);
  jac.block<3, 3>(3, 3) = Mat3::Identity();
  for (int j : model.support(link)) {
    const Vec3& a = kin.joint_axis[j];
    jac.block<3, 1>(0, 6 + j) = a.cross(p - kin.joint_point[j]);
    jac.block<3, 1>(3, 6 + j) = a;
  }
  return jac;
}

Vec6 jacobian_dot_nu(const RobotModel& model, const RobotState& state, const std::string& frame) {
  const int idx = model.frame_index(frame);
  return jacobian_dot_nu(model, state, compute_kinematics(model, state), idx);
}

Vec6 jacobian_dot_nu(const RobotModel& model, const RobotState& /*state*/, const Kinematics& kin,
                     int frame) {
  const int link = model.frames()[frame_index_checked(model, frame)].link;
  const Vec3 p = frame_pose(model, kin, frame).position;
  const Vec6& v = kin.link_velocity[link];
  const Vec6& a = kin.link_bias[link];
  const Vec3 omega = v.head<3>();
  const Vec3 point_velocity = v.tail<3>() + omega.cross(p);
  Vec6 out;
  out.head<3>() = a.tail<3>() + a.head<3>().cross(p) + omega.cross(point_velocity);
  out.tail<3>() = a.head<3>();
  return out;
}

MatX mass_matrix(const RobotModel& model, const RobotState& state) {
  return mass_matrix(model, state, compute_kinematics(model, state));
}

MatX mass_matrix(const RobotModel& model, const RobotState& state, const Kinematics& kin) {
  const int n = model.dof();
  const int nl = static_cast<int>(model.links().size());
  std::vector<Mat6> composite(nl);
  for (int l = 0; l < nl; ++l) {
    composite[l] = spatial_inertia(model.links()[l], kin.link_pose[l]);
  }
  const auto& order = model.traversal();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Joint& joint = model.joints()[*it];
    composite[joint.parent] += composite[joint.child];
  }

  const Mat6 sb = base_subspace(state.base_position);
  MatX m = MatX::Zero(6 + n, 6 + n);
  m.topLeftCorner<6, 6>() = sb.transpose() * composite[model.base_link()] * sb;
  for (int j = 0; j < n; ++j) {
    const Joint& joint = model.joints()[j];
    const Vec6 force = composite[joint.child] * joint_subspace(kin, j);
    m(6 + j, 6 + j) = joint_subspace(kin, j).dot(force);
    for (int k : model.support(joint.parent)) {
      m(6 + k, 6 + j) = joint_subspace(kin, k).dot(force);
      m(6 + j, 6 + k) = m(6 + k, 6 + j);
    }
    const Vec6 base_col = sb.transpose() * force;
    m.block<6, 1>(0, 6 + j) = base_col;
    m.block<1, 6>(6 + j, 0) = base_col.transpose();
  }
  return m;
}

namespace {

VecX newton_euler(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                  const VecX& nu_dot, double gravity) {
  const int n = model.dof();
  const int nl = static_cast<int>(model.links().size());
  const int base = model.base_link();
  const Mat6 sb = base_subspace(state.base_position);

  std::vector<Vec6> acc(nl, Vec6::Zero());
  Vec6 gravity_acc = Vec6::Zero();
  gravity_acc(5) = gravity;
  acc[base] = sb * nu_dot.head<6>() + kin.link_bias[base] + gravity_acc;
  for (int j : model.traversal()) {
    const Joint& joint = model.joints()[j];
    const Vec6 s = joint_subspace(kin, j);
    acc[joint.child] = acc[joint.parent] + s * nu_dot(6 + j) +
                       motion_cross(kin.link_velocity[joint.child], s) * state.joint_velocities(j);
  }

  std::vector<Vec6> force(nl);
  for (int l = 0; l < nl; ++l) {
    const Mat6 inertia = spatial_inertia(model.links()[l], kin.link_pose[l]);
    force[l] = inertia * acc[l] + force_cross(kin.link_velocity[l], inertia * kin.link_velocity[l]);
  }

  VecX out(6 + n);
  const auto& order = model.traversal();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Joint& joint = model.joints()[*it];
    out(6 + *it) = joint_subspace(kin, *it).dot(force[joint.child]);
    force[joint.parent] += force[joint.child];
  }
  out.head<6>() = sb.transpose() * force[base];
  return out;
}

}  // namespace

VecX inverse_dynamics(const RobotModel& model, const RobotState& state, const VecX& nu_dot,
                      double gravity) {
  if (nu_dot.size() != 6 + model.dof()) {
    throw StateError("acceleration dimension does not match model");
  }
  return newton_euler(model, state, compute_kinematics(model, state), nu_dot, gravity);
}

VecX bias_forces(const RobotModel& model, const RobotState& state) {
  return bias_forces(model, state, compute_kinematics(model, state));
}

VecX bias_forces(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                 double gravity) {
  return newton_euler(model, state, kin, VecX::Zero(6 + model.dof()), gravity);
}

VecX gravity_forces(const RobotModel& model, const RobotState& state) {
  RobotState still = state;
  still.set_velocity(VecX::Zero(6 + model.dof()));
  return bias_forces(model, still);
}

MatX coriolis_matrix(const RobotModel& model, const RobotState& state, double step) {
  const int dim = 6 + model.dof();
  std::vector<MatX> dm(dim);
  for (int k = 0; k < dim; ++k) {
    VecX delta = VecX::Zero(dim);
    delta(k) = step;
    dm[k] = (mass_matrix(model, retract(state, delta)) - mass_matrix(model, retract(state, -delta))) /
            (2.0 * step);
  }
  const VecX nu = state.velocity();
  MatX c = MatX::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) {
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        c(i, j) += 0.5 * (dm[k](i, j) + dm[j](i, k) - dm[i](j, k)) * nu(k);
      }
    }
  }
  // Bracket of the right-invariant rotation fields: the momentum conjugate
  // to omega_B (angular momentum about the base origin) enters as a skew term.
  const VecX momentum = mass_matrix(model, state) * nu;
  c.block<3, 3>(3, 3) += skew(momentum.segment<3>(3));
  return c;
}

double total_energy(const RobotModel& model, const RobotState& state) {
  const Kinematics kin = compute_kinematics(model, state);
  const VecX nu = state.velocity();
  const double kinetic = 0.5 * nu.dot(mass_matrix(model, state, kin) * nu);
  return kinetic + model.total_mass() * kGravity * kin.com.z();
}

VecX forward_dynamics(const RobotModel& model, const RobotState& state, const VecX& tau,
                      const MatX& contact_jacobian, const VecX& wrench) {
  const Kinematics kin = compute_kinematics(model, state);
  VecX rhs = -bias_forces(model, state, kin);
  rhs.tail(model.dof()) += tau;
  if (contact_jacobian.size() > 0) {
    rhs += contact_jacobian.transpose() * wrench;
  }
  return mass_matrix(model, state, kin).llt().solve(rhs);
}

}  // namespace balance
