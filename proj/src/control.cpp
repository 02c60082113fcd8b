#include "balance/control.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "balance/linalg.hpp"

namespace balance {

namespace {

constexpr double kTwoPi = 6.283185307179586;

void require_spd(const MatX& m, int size, const std::string& name) {
  if (m.rows() != size || m.cols() != size) {
    throw std::invalid_argument(name + " must be " + std::to_string(size) + "x" +
                                std::to_string(size));
  }
  if (!(m - m.transpose()).isZero(1e-12 * std::max(1.0, m.norm()))) {
    throw std::invalid_argument(name + " must be symmetric");
  }
  if (!(min_symmetric_eigenvalue(m) > 0.0)) {
    throw std::invalid_argument(name + " must be positive definite");
  }
}

const std::array<const char*, 11> kConeRows = {
    "f_x <= mu f_z",    "-f_x <= mu f_z",   "f_y <= mu f_z",   "-f_y <= mu f_z",
    "f_z >= f_z_min",   "tau_y <= l f_z",   "-tau_y <= l f_z", "tau_x <= w f_z",
    "-tau_x <= w f_z",  "tau_z <= mu' f_z", "-tau_z <= mu' f_z"};

}  // namespace

std::string to_string(GainMode mode) {
  return mode == GainMode::classical ? "classical" : "modified";
}

GainMode gain_mode_from_string(const std::string& text) {
  if (text == "classical") return GainMode::classical;
  if (text == "modified") return GainMode::modified;
  throw std::invalid_argument("unknown gain mode '" + text + "'");
}

void GainSet::validate(int dof) const {
  require_spd(kp, 6, "K_p");
  require_spd(kp_joint, dof, "postural K_p");
  require_spd(kd_joint, dof, "postural K_d");
  if (!(ki - ki.transpose()).isZero(1e-12)) throw std::invalid_argument("K_i must be symmetric");
  if (mode == GainMode::classical) {
    if (!ki.bottomRightCorner<3, 3>().isZero(0.0) || !ki.topRightCorner<3, 3>().isZero(0.0) ||
        !ki.bottomLeftCorner<3, 3>().isZero(0.0)) {
      throw std::invalid_argument("classical K_i must act on the linear momentum only");
    }
    require_spd(ki.topLeftCorner<3, 3>(), 3, "linear block of K_i");
  } else {
    require_spd(ki, 6, "K_i");
  }
}

GainSet GainSet::uniform(GainMode mode, int dof, double kp, double ki, double kp_joint,
                         double kd_joint) {
  GainSet g;
  g.mode = mode;
  g.kp = kp * Mat6::Identity();
  g.ki = ki * Mat6::Identity();
  if (mode == GainMode::classical) g.ki.bottomRightCorner<3, 3>().setZero();
  g.kp_joint = kp_joint * MatX::Identity(dof, dof);
  g.kd_joint = kd_joint * MatX::Identity(dof, dof);
  return g;
}

ReferenceSample Reference::at(double t) const {
  ReferenceSample s;
  s.com = com;
  if (type == Type::com_sine) {
    const double w = kTwoPi * frequency;
    s.com(axis) += amplitude * std::sin(w * t);
    s.com_velocity(axis) = amplitude * w * std::cos(w * t);
    s.com_acceleration(axis) = -amplitude * w * w * std::sin(w * t);
  }
  s.momentum.head<3>() = mass * s.com_velocity;
  s.momentum_rate.head<3>() = mass * s.com_acceleration;
  return s;
}

Reference make_reference(const RobotModel& model, int support_frame, const Pose& anchor,
                         const VecX& q_d, Reference::Type type, int axis, double amplitude,
                         double frequency) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("reference axis must be 0, 1 or 2");
  if (amplitude < 0.0) throw std::invalid_argument("reference amplitude must be nonnegative");
  Reference r;
  r.type = type;
  r.axis = axis;
  r.amplitude = amplitude;
  r.frequency = frequency;
  r.mass = model.total_mass();
  r.joint_positions = q_d;
  const RobotState s =
      embed_on_support(model, support_frame, anchor, q_d, VecX::Zero(model.dof()));
  r.com = center_of_mass(model, s);
  r.angular_cmm = constrained_cmm(model, s, support_frame).bottomRows<3>();
  return r;
}

TaskProjection task_projection(const TransformedDynamics& dyn) {
  const MatX jj = stacked_jacobian(dyn).rightCols(dyn.dof);
  TaskProjection p;
  p.lambda = dyn.joint_mass().llt().solve(jj.transpose()).transpose();
  const Pseudoinverse pi = pseudoinverse(p.lambda);
  p.rank = pi.rank;
  if (pi.rank < p.lambda.rows()) {
    throw RankError("Lambda = J_j M_j^-1 is rank deficient (rank " + std::to_string(pi.rank) +
                        " < " + std::to_string(p.lambda.rows()) + ")",
                    pi.rank);
  }
  p.lambda_pinv = pi.pinv;
  p.nullspace = nullspace_projector(p.lambda, p.lambda_pinv);
  return p;
}

MatX stacked_jacobian(const TransformedDynamics& dyn) {
  MatX j(6 * dyn.contacts.size(), 6 + dyn.dof);
  for (std::size_t k = 0; k < dyn.contacts.size(); ++k) {
    j.middleRows(6 * k, 6) = dyn.contacts[k].jacobian_bar;
  }
  return j;
}

VecX stacked_drift(const TransformedDynamics& dyn) {
  VecX d(6 * dyn.contacts.size());
  for (std::size_t k = 0; k < dyn.contacts.size(); ++k) d.segment<6>(6 * k) = dyn.contacts[k].drift_bar;
  return d;
}

Vec6 momentum_reference(const GainSet& gains, const ControllerState& ctrl, const Vec6& momentum,
                        const ReferenceSample& ref) {
  return ref.momentum_rate - gains.kp * (momentum - ref.momentum) - gains.ki * ctrl.integral;
}

Vec6 momentum_integrand(const GainSet& gains, const TransformedDynamics& dyn,
                        const RobotState& state, const Reference& reference,
                        const ReferenceSample& sample) {
  if (gains.mode == GainMode::classical) return dyn.momentum - sample.momentum;
  const VecX& qdot = state.joint_velocities;
  Vec6 rate;
  rate.head<3>() = constrained_cmm(dyn, 0).topRows<3>() * qdot;
  rate.tail<3>() = reference.angular_cmm * qdot;
  return rate - sample.momentum;
}

ControllerState integrate_momentum_error(const ControllerState& ctrl, const Vec6& integrand,
                                         double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integration step must be positive");
  ControllerState next = ctrl;
  next.integral += dt * integrand;
  next.time += dt;
  return next;
}

Vec6 one_foot_wrench(const TransformedDynamics& dyn, const Vec6& momentum_rate_des,
                     std::size_t contact) {
  const Mat6 jb = dyn.contacts.at(contact).base_block();
  Vec6 rhs = momentum_rate_des;
  rhs(2) += dyn.mass * kGravity;
  Eigen::FullPivLU<Mat6> lu(jb.transpose());
  if (lu.rank() < 6) {
    throw RankError("support Jacobian base block is singular", static_cast<int>(lu.rank()));
  }
  return lu.solve(rhs);
}

std::pair<MatX, MatX> postural_gains(const GainSet& gains, const TransformedDynamics& dyn,
                                     const TaskProjection& proj) {
  if (gains.mode == GainMode::classical) return {gains.kp_joint, gains.kd_joint};
  const MatX nm = proj.nullspace * dyn.joint_mass();
  return {gains.kp_joint * nm, gains.kd_joint * nm};
}

VecX postural_torque(const TransformedDynamics& dyn, const RobotState& state, const VecX& wrench,
                     const GainSet& gains, const TaskProjection& proj, const VecX& q_d) {
  const auto [kp, kd] = postural_gains(gains, dyn, proj);
  const MatX jj = stacked_jacobian(dyn).rightCols(dyn.dof);
  return dyn.joint_bias() - jj.transpose() * wrench - kp * (state.joint_positions - q_d) -
         kd * state.joint_velocities;
}

VecX one_foot_torques(const TransformedDynamics& dyn, const TaskProjection& proj,
                      const VecX& wrench, const VecX& postural) {
  const MatX j = stacked_jacobian(dyn);
  const VecX acc = dyn.mass_bar.llt().solve(dyn.bias_bar - j.transpose() * wrench);
  return proj.lambda_pinv * (j * acc - stacked_drift(dyn)) + proj.nullspace * postural;
}

FrictionCone friction_cone(const FrictionParams& p) {
  if (!(p.mu > 0.0)) throw std::invalid_argument("friction coefficient must be positive");
  if (p.fz_min < 0.0) throw std::invalid_argument("f_z_min must be nonnegative");
  if (!(p.half_length > 0.0) || !(p.half_width > 0.0)) {
    throw std::invalid_argument("foot half-length and half-width must be positive");
  }
  const double yaw = p.mu * std::min(p.half_length, p.half_width);
  FrictionCone cone;
  cone.c.setZero();
  cone.b.setZero();
  // wrench layout (f_x, f_y, f_z, tau_x, tau_y, tau_z)
  cone.c.row(0) << 1, 0, -p.mu, 0, 0, 0;
  cone.c.row(1) << -1, 0, -p.mu, 0, 0, 0;
  cone.c.row(2) << 0, 1, -p.mu, 0, 0, 0;
  cone.c.row(3) << 0, -1, -p.mu, 0, 0, 0;
  cone.c.row(4) << 0, 0, -1, 0, 0, 0;
  cone.b(4) = -p.fz_min;
  cone.c.row(5) << 0, 0, -p.half_length, 0, 1, 0;
  cone.c.row(6) << 0, 0, -p.half_length, 0, -1, 0;
  cone.c.row(7) << 0, 0, -p.half_width, 1, 0, 0;
  cone.c.row(8) << 0, 0, -p.half_width, -1, 0, 0;
  cone.c.row(9) << 0, 0, -yaw, 0, 0, 1;
  cone.c.row(10) << 0, 0, -yaw, 0, 0, -1;
  return cone;
}

FrictionCone rotate_cone(const FrictionCone& cone, const Mat3& rotation) {
  Mat6 to_sole = Mat6::Zero();
  to_sole.topLeftCorner<3, 3>() = rotation.transpose();
  to_sole.bottomRightCorner<3, 3>() = rotation.transpose();
  FrictionCone out;
  out.c = cone.c * to_sole;
  out.b = cone.b;
  return out;
}

ControlOutput two_feet_controller(const TransformedDynamics& dyn, const RobotState& state,
                                  const Vec6& momentum_rate_des, const GainSet& gains,
                                  const VecX& q_d, const FrictionParams& cone_params,
                                  QpProblem* problem_out) {
  if (dyn.contacts.size() != 2) {
    throw std::invalid_argument("two-feet controller needs exactly two support frames");
  }
  const int n = dyn.dof;
  const TaskProjection proj = task_projection(dyn);
  const MatX j = stacked_jacobian(dyn);
  const MatX jj = j.rightCols(n);
  const auto [kp, kd] = postural_gains(gains, dyn, proj);
  const VecX u0 = dyn.joint_bias() - kp * (state.joint_positions - q_d) -
                  kd * state.joint_velocities;

  // tau*(f) = a + G f
  const Eigen::LLT<MatX> mass(dyn.mass_bar);
  const VecX a = proj.nullspace * u0 +
                 proj.lambda_pinv * (j * mass.solve(dyn.bias_bar) - stacked_drift(dyn));
  const MatX g = -proj.nullspace * jj.transpose() -
                 proj.lambda_pinv * j * mass.solve(MatX(j.transpose()));

  QpProblem qp;
  const MatX gtg = g.transpose() * g;
  // Small Tikhonov term keeps the Hessian strictly convex when G has a
  // nontrivial null space.
  const double reg = 1e-9 * std::max(1.0, gtg.trace() / 12.0);
  qp.hessian = 2.0 * (gtg + reg * MatX::Identity(12, 12));
  qp.gradient = 2.0 * g.transpose() * a;
  qp.a_eq.resize(6, 12);
  qp.a_eq << dyn.contacts[0].base_block().transpose(), dyn.contacts[1].base_block().transpose();
  qp.b_eq = momentum_rate_des;
  qp.b_eq(2) += dyn.mass * kGravity;
  const FrictionCone base = friction_cone(cone_params);
  qp.a_in = MatX::Zero(22, 12);
  qp.b_in = VecX(22);
  for (int k = 0; k < 2; ++k) {
    const FrictionCone c = rotate_cone(base, dyn.contacts[k].pose.rotation);
    qp.a_in.block<11, 6>(11 * k, 6 * k) = c.c;
    qp.b_in.segment<11>(11 * k) = c.b;
  }
  if (problem_out) *problem_out = qp;

  const QpSolution sol = solve(qp);
  if (sol.status != QpStatus::optimal) {
    std::ostringstream msg;
    msg << "two-feet wrench allocation " << to_string(sol.status);
    if (!sol.violated.empty()) {
      msg << "; cone rows violated at the least-norm equality-feasible wrench:";
      for (int row : sol.violated) {
        msg << ' ' << (row < 11 ? "left " : "right ") << kConeRows[row % 11] << ';';
      }
    }
    spdlog::debug("QP problem: {}", to_json(qp));
    throw ControlError(msg.str());
  }

  ControlOutput out;
  out.wrench = sol.x;
  out.tau = a + g * sol.x;
  out.postural = u0 - jj.transpose() * sol.x;
  out.momentum_rate_des = momentum_rate_des;
  out.nullspace_residual = (proj.lambda * proj.nullspace).norm();
  out.qp_status = sol.status;
  out.kkt = kkt_residuals(qp, sol);
  out.qp_iterations = sol.iterations;
  return out;
}

BalanceController::BalanceController(const RobotModel& model, GainSet gains, Reference reference,
                                     ContactMode contact, std::vector<int> support_frames,
                                     FrictionParams cone)
    : model_(&model),
      gains_(std::move(gains)),
      reference_(std::move(reference)),
      contact_(contact),
      frames_(std::move(support_frames)),
      cone_(cone) {
  gains_.validate(model.dof());
  const std::size_t expected = contact_ == ContactMode::one_foot ? 1 : 2;
  if (frames_.size() != expected) {
    throw std::invalid_argument("support frame count does not match the contact mode");
  }
  if (reference_.joint_positions.size() != model.dof()) {
    throw std::invalid_argument("reference posture has the wrong size");
  }
  friction_cone(cone_);
}

ControlOutput BalanceController::evaluate(const RobotState& state,
                                          const ControllerState& ctrl) const {
  const TransformedDynamics dyn = transformed_dynamics(*model_, state, frames_);
  const ReferenceSample sample = reference_.at(ctrl.time);
  const Vec6 rate_des = momentum_reference(gains_, ctrl, dyn.momentum, sample);

  ControlOutput out;
  if (contact_ == ContactMode::one_foot) {
    const TaskProjection proj = task_projection(dyn);
    out.wrench = one_foot_wrench(dyn, rate_des);
    out.postural =
        postural_torque(dyn, state, out.wrench, gains_, proj, reference_.joint_positions);
    out.tau = one_foot_torques(dyn, proj, out.wrench, out.postural);
    out.momentum_rate_des = rate_des;
    out.nullspace_residual = (proj.lambda * proj.nullspace).norm();
  } else {
    out = two_feet_controller(dyn, state, rate_des, gains_, reference_.joint_positions, cone_);
  }
  out.momentum = dyn.momentum;
  out.momentum_error = dyn.momentum - sample.momentum;
  out.integrand = momentum_integrand(gains_, dyn, state, reference_, sample);
  return out;
}

Vec6 BalanceController::integral_at(const RobotState& state, double t) const {
  Vec6 i = Vec6::Zero();
  i.head<3>() = reference_.mass * (center_of_mass(*model_, state) - reference_.at(t).com);
  if (gains_.mode == GainMode::modified) {
    i.tail<3>() = reference_.angular_cmm * (state.joint_positions - reference_.joint_positions);
  }
  return i;
}

}  // namespace balance
