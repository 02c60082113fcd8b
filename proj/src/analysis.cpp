#include "balance/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "balance/centroidal.hpp"
#include "balance/sim.hpp"

namespace balance {

namespace {

double min_symmetric_eig(const MatX& m) {
  const Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_symmetric_eig(const MatX& m) {
  const Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

BalanceController hold_controller(const RobotModel& model, int support_frame, const VecX& q_d,
                                  const GainSet& gains) {
  Reference ref = make_reference(model, support_frame, Pose::identity(), q_d,
                                 Reference::Type::hold);
  return BalanceController(model, gains, std::move(ref), ContactMode::one_foot, {support_frame});
}

MatX fd_matrix(const RobotModel& model, const BalanceController& controller, const VecX& q_d,
               double h) {
  const int n = model.dof();
  const VecX zero = VecX::Zero(n);
  MatX a = MatX::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n).setIdentity();
  for (int i = 0; i < n; ++i) {
    const VecX e = VecX::Unit(n, i) * h;
    a.block(n, i, n, 1) = (closed_loop_acceleration(model, controller, q_d + e, zero) -
                           closed_loop_acceleration(model, controller, q_d - e, zero)) /
                          (2.0 * h);
    a.block(n, n + i, n, 1) = (closed_loop_acceleration(model, controller, q_d, e) -
                               closed_loop_acceleration(model, controller, q_d, -e)) /
                              (2.0 * h);
  }
  return a;
}

}  // namespace

LinearizedSystem analytic_linearization(const RobotModel& model, int support_frame,
                                        const VecX& q_d, const GainSet& gains) {
  const int n = model.dof();
  if (q_d.size() != n) throw std::invalid_argument("posture size does not match the model");
  // sizes only: zero gains are meaningful here
  if (gains.kp_joint.rows() != n || gains.kp_joint.cols() != n || gains.kd_joint.rows() != n ||
      gains.kd_joint.cols() != n) {
    throw std::invalid_argument("postural gains must be " + std::to_string(n) + "x" +
                                std::to_string(n));
  }
  const RobotState state =
      embed_on_support(model, support_frame, Pose::identity(), q_d, VecX::Zero(n));
  const TransformedDynamics dyn = transformed_dynamics(model, state, {support_frame});
  const TaskProjection proj = task_projection(dyn);

  LinearizedSystem sys;
  sys.mode = gains.mode;
  sys.q_d = q_d;
  sys.joint_mass = dyn.joint_mass();
  sys.base_mass = dyn.base_mass();
  sys.base_jacobian = dyn.contacts[0].base_block();
  sys.joint_jacobian = dyn.contacts[0].joint_block();
  sys.lambda = proj.lambda;
  sys.lambda_pinv = proj.lambda_pinv;
  sys.nullspace = proj.nullspace;

  // W = M_b J_b^-1 maps the support wrench rate space to momentum.
  const Mat6 w = sys.base_mass * sys.base_jacobian.inverse();
  const Mat6 w_inv = sys.base_jacobian * sys.base_mass.inverse();
  const Eigen::LLT<MatX> mj(sys.joint_mass);
  const MatX& m = sys.joint_mass;
  const MatX& nl = sys.nullspace;

  auto momentum_block = [&](const Mat6& k) -> MatX {
    return -mj.solve(MatX(sys.lambda_pinv * w_inv * k * w * sys.joint_jacobian));
  };
  auto postural_block = [&](const MatX& k) -> MatX {
    if (gains.mode == GainMode::modified) return -mj.solve(MatX(nl * k * nl * m));
    return -mj.solve(MatX(nl * k));
  };

  sys.a = MatX::Zero(2 * n, 2 * n);
  sys.a.topRightCorner(n, n).setIdentity();
  sys.a.bottomLeftCorner(n, n) = momentum_block(gains.ki) + postural_block(gains.kp_joint);
  sys.a.bottomRightCorner(n, n) = momentum_block(gains.kp) + postural_block(gains.kd_joint);
  return sys;
}

VecX closed_loop_acceleration(const RobotModel& model, const BalanceController& controller,
                              const VecX& q, const VecX& qdot) {
  const int sole = controller.support_frames().at(0);
  const RobotState state = embed_on_support(model, sole, Pose::identity(), q, qdot);
  ControllerState ctrl;
  ctrl.integral = controller.integral_at(state, 0.0);
  const ControlOutput out = controller.evaluate(state, ctrl);
  ContactSetup contact;
  contact.frames = {sole};
  contact.anchors = {Pose::identity()};
  contact.k_pos = 0.0;
  contact.k_vel = 0.0;
  return constrained_forward_dynamics(model, state, out.tau, contact).nu_dot.tail(model.dof());
}

FdLinearization fd_linearization(const RobotModel& model, int support_frame, const VecX& q_d,
                                 const GainSet& gains, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("difference step must be positive");
  if (q_d.size() != model.dof()) throw std::invalid_argument("posture size does not match the model");
  const BalanceController controller = hold_controller(model, support_frame, q_d, gains);
  FdLinearization out;
  out.a = fd_matrix(model, controller, q_d, h);
  out.step_agreement = relative_error(fd_matrix(model, controller, q_d, h / 10.0), out.a);
  return out;
}

SpectralReport spectral_report(const MatX& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("spectral report needs a square matrix");
  SpectralReport r;
  if (a.size() == 0) return r;
  const Eigen::EigenSolver<MatX> es(a, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalue solver did not converge");
  const auto& ev = es.eigenvalues();
  r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(r.eigenvalues.begin(), r.eigenvalues.end(),
            [](const std::complex<double>& x, const std::complex<double>& y) {
              if (x.real() != y.real()) return x.real() > y.real();
              return x.imag() > y.imag();
            });
  r.max_real = r.eigenvalues.front().real();
  r.margin = -r.max_real;
  return r;
}

LyapunovCertificate lyapunov_certificate(const LinearizedSystem& sys, const GainSet& gains,
                                         double rel_tol) {
  const int n = sys.dof();
  const Mat6 w = sys.base_mass * sys.base_jacobian.inverse();
  const MatX wl = w * sys.lambda;
  const MatX& nl = sys.nullspace;
  const MatX& m = sys.joint_mass;

  LyapunovCertificate c;
  c.q1 = wl.transpose() * gains.ki * wl + nl * gains.kp_joint * nl;
  c.q2 = wl.transpose() * wl + nl;
  c.q1 = 0.5 * (c.q1 + c.q1.transpose());
  c.q2 = 0.5 * (c.q2 + c.q2.transpose());
  c.p = MatX::Zero(2 * n, 2 * n);
  c.p.topLeftCorner(n, n) = m.transpose() * c.q1 * m;
  c.p.bottomRightCorner(n, n) = m.transpose() * c.q2 * m;
  c.s = sys.a.transpose() * c.p + c.p * sys.a;

  c.q1_min_eig = min_symmetric_eig(c.q1);
  c.q2_min_eig = min_symmetric_eig(c.q2);
  c.vdot_max_eig = max_symmetric_eig(c.s);
  c.p_norm = std::max(std::abs(max_symmetric_eig(c.p)), std::abs(min_symmetric_eig(c.p)));
  c.max_real = spectral_report(sys.a).max_real;

  if (sys.mode != GainMode::modified || gains.mode != GainMode::modified) {
    c.reason = "classical gains: the certificate assumes modified postural gains and SPD K_i";
  } else if (c.q1_min_eig <= 0.0) {
    c.reason = "Q1 is not positive definite";
  } else if (c.q2_min_eig <= 0.0) {
    c.reason = "Q2 is not positive definite";
  } else if (c.vdot_max_eig > rel_tol * c.p_norm) {
    c.reason = "A'P + PA is not negative semidefinite";
  } else if (!(c.max_real < 0.0)) {
    c.reason = "A has an eigenvalue with nonnegative real part";
  } else {
    c.certified = true;
  }
  return c;
}

ResponseComparison compare_linear_response(const RobotModel& model, int support_frame,
                                           const VecX& q_d, const GainSet& gains, const VecX& x0,
                                           double horizon, double dt) {
  const int n = model.dof();
  if (x0.size() != 2 * n) throw std::invalid_argument("x0 must hold joint offsets and rates");
  const MatX a = analytic_linearization(model, support_frame, q_d, gains).a;
  const MatX step_map = (a * dt).exp();
  const BalanceController controller = hold_controller(model, support_frame, q_d, gains);

  SimState sim;
  sim.robot = embed_on_support(model, support_frame, Pose::identity(), q_d + x0.head(n),
                               x0.tail(n));
  const ContactSetup contact = ContactSetup::capture(model, sim.robot, {support_frame});
  ControllerState ctrl;
  ctrl.integral = controller.integral_at(sim.robot, 0.0);
  VecX lin = x0;

  ResponseComparison out;
  const long steps = std::lround(horizon / dt);
  for (long i = 0; i <= steps; ++i) {
    VecX x(2 * n);
    x << sim.robot.joint_positions - q_d, sim.robot.joint_velocities;
    out.max_error = std::max(out.max_error, (x - lin).norm());
    out.max_norm = std::max(out.max_norm, lin.norm());
    if (i == steps) break;
    const ControlOutput u = controller.evaluate(sim.robot, ctrl);
    sim = step(model, sim, u.tau, contact, dt);
    ctrl = integrate_momentum_error(ctrl, u.integrand, dt);
    lin = step_map * lin;
  }
  return out;
}

VecX linear_response(const MatX& a, const VecX& x0, double t) {
  const MatX at = a * t;
  return at.exp() * x0;
}

double relative_error(const MatX& a, const MatX& b) {
  const double den = b.norm();
  return den > 0.0 ? (a - b).norm() / den : (a - b).norm();
}

}  // namespace balance
