#pragma once

#include <map>
#include <string>
#include <vector>

#include "balance/model.hpp"
#include "balance/types.hpp"

namespace balance {

// Spatial quantities inside this module use Plücker coordinates taken at the
// inertial origin with inertial orientation, ordered (angular, linear).
// Everything exposed through the generalized-coordinate API uses the mixed
// convention instead: (linear, angular) at the point of interest.

/// Per-state kinematic snapshot shared by the dynamics routines.
struct Kinematics {
  std::vector<Pose> link_pose;      ///< link frames in the inertial frame
  std::vector<Vec3> joint_axis;     ///< joint axes, inertial coordinates
  std::vector<Vec3> joint_point;    ///< joint origins, inertial coordinates
  std::vector<Vec6> link_velocity;  ///< spatial velocity at the origin (angular, linear)
  std::vector<Vec6> link_bias;      ///< spatial acceleration for zero nu_dot, no gravity
  std::vector<Vec3> link_com;       ///< link CoM positions
  Vec3 com = Vec3::Zero();          ///< whole-body CoM
};

Kinematics compute_kinematics(const RobotModel& model, const RobotState& state);

/// Poses of every link and every named frame, keyed by name.
std::map<std::string, Pose> forward_kinematics(const RobotModel& model, const RobotState& state);

Pose frame_pose(const RobotModel& model, const Kinematics& kin, int frame);

/// Whole-body centre of mass.
Vec3 center_of_mass(const RobotModel& model, const RobotState& state);

/// Mixed Jacobian of a named frame: J nu = (linear velocity of the frame
/// origin, angular velocity), both inertial. Size 6 x (6+n).
MatX frame_jacobian(const RobotModel& model, const RobotState& state, const std::string& frame);
MatX frame_jacobian(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                    int frame);

/// Jdot nu of a named frame: its acceleration when nu_dot = 0.
Vec6 jacobian_dot_nu(const RobotModel& model, const RobotState& state, const std::string& frame);
Vec6 jacobian_dot_nu(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                     int frame);

/// Mass matrix by the composite-rigid-body algorithm.
MatX mass_matrix(const RobotModel& model, const RobotState& state);
MatX mass_matrix(const RobotModel& model, const RobotState& state, const Kinematics& kin);

/// Generalized forces M(q) nu_dot + C(q, nu) nu + G(q) by recursive Newton-Euler.
/// `gravity` scales the gravitational term (1 for physical gravity, 0 to drop it).
VecX inverse_dynamics(const RobotModel& model, const RobotState& state, const VecX& nu_dot,
                      double gravity = kGravity);

/// h = C(q, nu) nu + G(q).
VecX bias_forces(const RobotModel& model, const RobotState& state);
VecX bias_forces(const RobotModel& model, const RobotState& state, const Kinematics& kin,
                 double gravity = kGravity);

/// G(q).
VecX gravity_forces(const RobotModel& model, const RobotState& state);

/// Coriolis matrix with C nu + G = bias_forces and Mdot - 2C skew-symmetric.
/// Built from Christoffel symbols of central-difference derivatives of M
/// along the tangent parametrization of `retract`, plus the so(3) bracket
/// term required by the quasi-velocity omega_B.
MatX coriolis_matrix(const RobotModel& model, const RobotState& state, double step = 1e-5);

/// 1/2 nu^T M nu + m g z_com.
double total_energy(const RobotModel& model, const RobotState& state);

/// Unconstrained forward dynamics: M^{-1}(B tau + sum J_k^T f_k - h).
VecX forward_dynamics(const RobotModel& model, const RobotState& state, const VecX& tau,
                      const MatX& contact_jacobian = MatX(), const VecX& wrench = VecX());

}  // namespace balance
