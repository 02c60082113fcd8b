#pragma once

#include <string>
#include <vector>

#include "balance/centroidal.hpp"
#include "balance/qp.hpp"
#include "balance/types.hpp"

namespace balance {

// All dynamics here are the transformed (centroidal) ones from
// TransformedDynamics; J_b, M_b, h below mean J_bar_b, M_bar_b, h_bar.

enum class GainMode { classical, modified };

std::string to_string(GainMode mode);
GainMode gain_mode_from_string(const std::string& text);

/// Momentum gains plus postural gains. In classical mode the postural
/// gains are the raw K_p^j, K_d^j; in modified mode they are the K_bar
/// matrices that get multiplied by N_Lambda M_j at run time.
struct GainSet {
  GainMode mode = GainMode::modified;
  Mat6 kp = Mat6::Identity();
  Mat6 ki = Mat6::Zero();
  MatX kp_joint;
  MatX kd_joint;

  /// Checks sizes, symmetry and definiteness for the mode. Classical mode
  /// requires the angular block of K_i to be exactly zero.
  void validate(int dof) const;

  static GainSet uniform(GainMode mode, int dof, double kp, double ki, double kp_joint,
                         double kd_joint);
};

/// Desired momentum and CoM at one instant.
struct ReferenceSample {
  Vec3 com = Vec3::Zero();
  Vec3 com_velocity = Vec3::Zero();
  Vec3 com_acceleration = Vec3::Zero();
  Vec6 momentum = Vec6::Zero();       ///< H^d = (m xdot_c^d, 0)
  Vec6 momentum_rate = Vec6::Zero();  ///< Hdot^d
};

struct Reference {
  enum class Type { hold, com_sine };
  Type type = Type::hold;
  int axis = 1;  ///< 0 = x, 1 = y, 2 = z
  double amplitude = 0.05;
  double frequency = 0.3;
  double mass = 0.0;
  VecX joint_positions;      ///< q_j^d
  Vec3 com = Vec3::Zero();   ///< x_c(q_j^d) with the support sole at its anchor
  MatX angular_cmm;          ///< J_G^omega(q_j^d), 3 x n, constrained to the support sole

  ReferenceSample at(double t) const;
};

/// Builds the reference around posture q_d with the support frame held at
/// `anchor`.
Reference make_reference(const RobotModel& model, int support_frame, const Pose& anchor,
                         const VecX& q_d, Reference::Type type, int axis = 1,
                         double amplitude = 0.05, double frequency = 0.3);

struct ControllerState {
  Vec6 integral = Vec6::Zero();  ///< I_H~
  double time = 0.0;
  void reset() { *this = ControllerState{}; }
};

struct ControlOutput {
  VecX tau;
  VecX wrench;                        ///< 6 per support frame, stacked
  Vec6 momentum_rate_des = Vec6::Zero();  ///< Hdot*
  Vec6 momentum = Vec6::Zero();
  Vec6 momentum_error = Vec6::Zero();     ///< H - H^d
  Vec6 integrand = Vec6::Zero();          ///< d/dt I_H~ at this state
  VecX postural;                          ///< tau_0
  double nullspace_residual = 0.0;        ///< ||Lambda N_Lambda||
  QpStatus qp_status = QpStatus::optimal;
  KktResiduals kkt;
  int qp_iterations = 0;
};

/// Lambda = J_j M_j^-1 for the stacked support frames with its SVD
/// pseudoinverse and null-space projector.
struct TaskProjection {
  MatX lambda;
  MatX lambda_pinv;
  MatX nullspace;
  int rank = 0;
};

/// Throws RankError when Lambda is not full row rank.
TaskProjection task_projection(const TransformedDynamics& dyn);

/// Stacked contact Jacobian, drift and their base/joint blocks.
MatX stacked_jacobian(const TransformedDynamics& dyn);
VecX stacked_drift(const TransformedDynamics& dyn);

/// Hdot* = Hdot^d - K_p (H - H^d) - K_i I.
Vec6 momentum_reference(const GainSet& gains, const ControllerState& ctrl, const Vec6& momentum,
                        const ReferenceSample& ref);

/// d/dt I_H~: H - H^d (classical) or [J_G^L(q); J_G^omega(q^d)] qdot - H^d (modified).
Vec6 momentum_integrand(const GainSet& gains, const TransformedDynamics& dyn,
                        const RobotState& state, const Reference& reference,
                        const ReferenceSample& sample);

/// Forward-Euler update of the integral.
ControllerState integrate_momentum_error(const ControllerState& ctrl, const Vec6& integrand,
                                         double dt);

/// f = J_b^-T (Hdot* + m g e3) for one support frame.
Vec6 one_foot_wrench(const TransformedDynamics& dyn, const Vec6& momentum_rate_des,
                     std::size_t contact = 0);

/// Postural joint gains actually applied: raw in classical mode,
/// K_bar N_Lambda M_j in modified mode.
std::pair<MatX, MatX> postural_gains(const GainSet& gains, const TransformedDynamics& dyn,
                                     const TaskProjection& proj);

/// tau_0 = h_j - J_j' f - K_p^j (q - q^d) - K_d^j qdot.
VecX postural_torque(const TransformedDynamics& dyn, const RobotState& state, const VecX& wrench,
                     const GainSet& gains, const TaskProjection& proj, const VecX& q_d);

/// tau = Lambda^+ (J M^-1 (h - J' f) - Jdot nu) + N_Lambda tau_0.
VecX one_foot_torques(const TransformedDynamics& dyn, const TaskProjection& proj,
                      const VecX& wrench, const VecX& postural);

struct FrictionParams {
  double mu = 0.6;
  double half_length = 0.06;
  double half_width = 0.03;
  double fz_min = 1.0;
};

/// Polyhedral wrench cone in the sole frame, 11 rows.
struct FrictionCone {
  Eigen::Matrix<double, 11, 6> c;
  Eigen::Matrix<double, 11, 1> b;
};

FrictionCone friction_cone(const FrictionParams& params);

/// Cone rows for a world-frame wrench at a sole with orientation `rotation`.
FrictionCone rotate_cone(const FrictionCone& cone, const Mat3& rotation);

/// Two-feet allocation: f* = argmin ||tau*(f)||^2 with the momentum-rate
/// equality and both cones; tau = tau*(f*). Throws ControlError if the QP
/// is infeasible.
ControlOutput two_feet_controller(const TransformedDynamics& dyn, const RobotState& state,
                                  const Vec6& momentum_rate_des, const GainSet& gains,
                                  const VecX& q_d, const FrictionParams& cone,
                                  QpProblem* problem_out = nullptr);

enum class ContactMode { one_foot, two_feet };

/// Full controller: reference, gains and the support configuration.
class BalanceController {
 public:
  BalanceController(const RobotModel& model, GainSet gains, Reference reference,
                    ContactMode contact, std::vector<int> support_frames,
                    FrictionParams cone = {});

  /// Evaluates the control law at `state`. Pure: the integral is read from
  /// `ctrl` and its rate returned in ControlOutput::integrand.
  ControlOutput evaluate(const RobotState& state, const ControllerState& ctrl) const;

  /// I_H~ consistent with the closed form at configuration q:
  /// [m (x_c(q) - x_c^d(t)); J_G^omega(q^d)(q - q^d)] (angular part zero in
  /// classical mode).
  Vec6 integral_at(const RobotState& state, double t) const;

  const GainSet& gains() const { return gains_; }
  const Reference& reference() const { return reference_; }
  const std::vector<int>& support_frames() const { return frames_; }
  ContactMode contact() const { return contact_; }

 private:
  const RobotModel* model_;
  GainSet gains_;
  Reference reference_;
  ContactMode contact_;
  std::vector<int> frames_;
  FrictionParams cone_;
};

}  // namespace balance
