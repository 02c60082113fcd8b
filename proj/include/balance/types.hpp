#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace balance {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Standard gravity, acting along -z of the inertial frame.
inline constexpr double kGravity = 9.81;

/// Rigid transform: rotation then translation, maps child coordinates to parent.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  static Pose identity() { return {}; }

  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.position + position};
  }
  Vec3 operator*(const Vec3& point) const { return rotation * point + position; }
  Pose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * position)};
  }
};

enum class SpatialRole { twist, wrench, momentum };

/// Six-dimensional quantity split into a linear and an angular part.
/// The 6-vector layout is always (linear, angular).
struct SpatialVector {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
  SpatialRole role = SpatialRole::twist;

  static SpatialVector from_vector(const Vec6& v, SpatialRole role) {
    return {v.head<3>(), v.tail<3>(), role};
  }
  Vec6 vector() const {
    Vec6 v;
    v << linear, angular;
    return v;
  }
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Control law could not be evaluated (e.g. infeasible wrench allocation).
class ControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a matrix that must be invertible or full rank is not.
class RankError : public std::runtime_error {
 public:
  RankError(const std::string& what, int rank) : std::runtime_error(what), rank_(rank) {}
  int rank() const { return rank_; }

 private:
  int rank_;
};

}  // namespace balance
