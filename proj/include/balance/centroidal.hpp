#pragma once

#include <vector>

#include "balance/model.hpp"
#include "balance/multibody.hpp"
#include "balance/types.hpp"

namespace balance {

// Centroidal change of velocity variables nu_bar = T(q) nu, which makes the
// mass matrix block diagonal. The transformed base velocity is
// (CoM velocity, average angular velocity), both inertial.
//
// Downstream modules (control, analysis) work exclusively with the
// transformed quantities and drop the "bar" in their own naming: whenever
// control code says J_b, M_b, h it means J_bar_b, M_bar_b, h_bar.

struct CentroidalTransform {
  MatX matrix;          ///< T, (6+n) x (6+n)
  MatX inverse;         ///< T^{-1}, assembled from the block structure
  Mat6 com_transform;   ///< cX_B = [1, -S(p_c - p_B); 0, 1]
  Vec3 com = Vec3::Zero();
};

/// Quantities of one constrained frame in both coordinate sets.
struct ContactTerms {
  int frame = -1;
  Pose pose;
  MatX jacobian;      ///< J, 6 x (6+n)
  Vec6 drift;         ///< Jdot nu
  MatX jacobian_bar;  ///< J_bar = J T^{-1}
  Vec6 drift_bar;     ///< Jdot_bar nu_bar = Jdot nu - J T^{-1} Tdot nu

  Mat6 base_block() const { return jacobian_bar.leftCols<6>(); }
  MatX joint_block() const { return jacobian_bar.rightCols(jacobian_bar.cols() - 6); }
};

/// Snapshot of the dynamics at one state, in original and transformed form.
struct TransformedDynamics {
  int dof = 0;
  double mass = 0.0;
  Kinematics kinematics;
  CentroidalTransform transform;
  MatX mass_matrix;       ///< M
  VecX bias;              ///< h = C nu + G
  MatX mass_bar;          ///< M_bar = T^{-T} M T^{-1}
  VecX bias_bar;          ///< h_bar = C_bar nu_bar + G_bar
  VecX gravity_bar;       ///< G_bar = T^{-T} G
  VecX velocity_bar;      ///< nu_bar
  VecX transform_rate;    ///< Tdot nu
  Vec6 momentum;          ///< H = M_bar_b nu_bar_b, about the CoM
  Mat3 centroidal_inertia;       ///< I(q), taken from M_bar_b
  Mat3 centroidal_inertia_rate;  ///< d/dt I(q)
  std::vector<ContactTerms> contacts;

  Mat6 base_mass() const { return mass_bar.topLeftCorner<6, 6>(); }
  MatX joint_mass() const { return mass_bar.bottomRightCorner(dof, dof); }
  VecX base_bias() const { return bias_bar.head<6>(); }
  VecX joint_bias() const { return bias_bar.tail(dof); }
  /// Average angular velocity omega_c, exposed for inspection only.
  Vec3 average_angular_velocity() const { return velocity_bar.segment<3>(3); }
};

CentroidalTransform centroidal_transform(const RobotModel& model, const RobotState& state);

/// Full transformed snapshot; `frames` are the constrained frames to include.
TransformedDynamics transformed_dynamics(const RobotModel& model, const RobotState& state,
                                         const std::vector<int>& frames = {});

/// C_bar = T^{-T}(M d/dt(T^{-1}) + C T^{-1}). Uses the finite-difference
/// Coriolis matrix, so this is meant for verification rather than control.
MatX transformed_coriolis(const RobotModel& model, const RobotState& state);

/// Momentum about the CoM with inertial orientation, (linear, angular).
Vec6 momentum(const RobotModel& model, const RobotState& state);

/// Same momentum, accumulated link by link from each body's own motion.
SpatialVector momentum_from_links(const RobotModel& model, const RobotState& state);

/// Centroidal momentum matrix J_G in original coordinates: H = J_G nu.
Mat6X centroidal_momentum_matrix(const RobotModel& model, const RobotState& state);

/// Condition number above which a support Jacobian block is reported.
inline constexpr double kSupportConditionWarning = 1e8;

/// Constrained CMM J_bar_G = -M_bar_b J_bar_b^{-1} J_bar_j (6 x n) for one
/// support frame; when J nu = 0 it maps joint rates to momentum.
MatX constrained_cmm(const RobotModel& model, const RobotState& state, int support_frame);
MatX constrained_cmm(const TransformedDynamics& dyn, std::size_t contact = 0);

/// State whose support frame sits at `anchor` for joint angles q and whose
/// base velocity keeps the frame still (J nu = 0) for joint rates qdot.
RobotState embed_on_support(const RobotModel& model, int support_frame, const Pose& anchor,
                            const VecX& q, const VecX& qdot);

}  // namespace balance
