#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "balance/types.hpp"

namespace balance {

struct Link {
  std::string name;
  double mass = 0.0;
  Vec3 com = Vec3::Zero();          ///< CoM offset in the link frame
  Mat3 inertia = Mat3::Identity();  ///< rotational inertia about the CoM, link axes
};

/// Revolute joint. `origin` is the fixed transform parent link -> joint frame;
/// the child link frame is the joint frame rotated by q about `axis`.
struct Joint {
  std::string name;
  int parent = -1;
  int child = -1;
  Pose origin;
  Vec3 axis = Vec3::UnitZ();
};

struct Frame {
  std::string name;
  int link = -1;
  Pose offset;
};

/// Immutable kinematic/inertial tree. Joint index i is the i-th generalized
/// joint coordinate; links are indexed in file order.
class RobotModel {
 public:
  RobotModel(std::string name, std::vector<Link> links, std::vector<Joint> joints,
             std::vector<Frame> frames, int base_link);

  const std::string& name() const { return name_; }
  int dof() const { return static_cast<int>(joints_.size()); }
  int base_link() const { return base_link_; }
  double total_mass() const { return total_mass_; }

  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Frame>& frames() const { return frames_; }

  /// Joints sorted so that every joint's parent link is reached before it.
  const std::vector<int>& traversal() const { return traversal_; }
  /// Joint whose child is the given link, -1 for the base.
  int parent_joint(int link) const { return parent_joint_[link]; }
  /// Joints on the path base -> link, root first.
  const std::vector<int>& support(int link) const { return support_[link]; }

  std::optional<int> find_link(std::string_view name) const;
  std::optional<int> find_frame(std::string_view name) const;
  /// Frame index; throws ModelError for unknown names.
  int frame_index(std::string_view name) const;

 private:
  std::string name_;
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<Frame> frames_;
  int base_link_;
  double total_mass_ = 0.0;
  std::vector<int> traversal_;
  std::vector<int> parent_joint_;
  std::vector<std::vector<int>> support_;
};

/// Parses and validates model JSON text.
RobotModel load_model(std::string_view text);
RobotModel load_model_file(const std::filesystem::path& path);

/// Floating-base configuration and velocity. The base twist is mixed:
/// linear velocity of the base origin and angular velocity, both in
/// inertial coordinates.
struct RobotState {
  Vec3 base_position = Vec3::Zero();
  Eigen::Quaterniond base_orientation = Eigen::Quaterniond::Identity();
  VecX joint_positions;
  Vec3 base_linear_velocity = Vec3::Zero();
  Vec3 base_angular_velocity = Vec3::Zero();
  VecX joint_velocities;

  static RobotState zero(const RobotModel& model);

  Mat3 base_rotation() const { return base_orientation.toRotationMatrix(); }
  Pose base_pose() const { return {base_rotation(), base_position}; }

  /// Generalized velocity nu = (pdot_B, omega_B, qdot_j).
  VecX velocity() const;
  void set_velocity(const VecX& nu);

  /// Throws StateError on dimension mismatch, non-unit quaternion or
  /// non-finite entries.
  void validate(const RobotModel& model) const;
};

/// Configuration displaced along a tangent vector delta in R^{6+n}:
/// p += delta_lin, R = exp(S(delta_ang)) R, q += delta_j. Velocities kept.
RobotState retract(const RobotState& state, const VecX& delta);

/// Configuration after moving for time dt with constant generalized velocity.
inline RobotState advance(const RobotState& state, double dt) {
  return retract(state, dt * state.velocity());
}

}  // namespace balance
