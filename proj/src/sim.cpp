#include "balance/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "balance/linalg.hpp"
#include "balance/multibody.hpp"

namespace balance {

namespace {

constexpr double kTwoFeetDamping = 1e-10;

MatX stacked_contact_jacobian(const RobotModel& model, const RobotState& state,
                              const Kinematics& kin, const ContactSetup& contact) {
  MatX j(6 * contact.frames.size(), 6 + model.dof());
  for (std::size_t k = 0; k < contact.frames.size(); ++k) {
    j.middleRows(6 * k, 6) = frame_jacobian(model, state, kin, contact.frames[k]);
  }
  return j;
}

VecX pose_error(const RobotModel& model, const Kinematics& kin, const ContactSetup& contact) {
  VecX e(6 * contact.frames.size());
  for (std::size_t k = 0; k < contact.frames.size(); ++k) {
    const Pose p = frame_pose(model, kin, contact.frames[k]);
    e.segment<3>(6 * k) = p.position - contact.anchors[k].position;
    e.segment<3>(6 * k + 3) = so3_log(p.rotation * contact.anchors[k].rotation.transpose());
  }
  return e;
}

// chi = (p, Q(w, x, y, z), q, v, omega, qdot)
VecX pack(const RobotState& s) {
  const int n = static_cast<int>(s.joint_positions.size());
  VecX x(13 + 2 * n);
  x.head<3>() = s.base_position;
  x.segment<4>(3) << s.base_orientation.w(), s.base_orientation.x(), s.base_orientation.y(),
      s.base_orientation.z();
  x.segment(7, n) = s.joint_positions;
  x.segment<3>(7 + n) = s.base_linear_velocity;
  x.segment<3>(10 + n) = s.base_angular_velocity;
  x.tail(n) = s.joint_velocities;
  return x;
}

RobotState unpack(const VecX& x, int n) {
  RobotState s;
  s.base_position = x.head<3>();
  s.base_orientation = Eigen::Quaterniond(x(3), x(4), x(5), x(6)).normalized();
  s.joint_positions = x.segment(7, n);
  s.base_linear_velocity = x.segment<3>(7 + n);
  s.base_angular_velocity = x.segment<3>(10 + n);
  s.joint_velocities = x.tail(n);
  return s;
}

VecX derivative(const RobotModel& model, const VecX& x, const VecX& tau,
                const ContactSetup& contact) {
  const int n = model.dof();
  const RobotState s = unpack(x, n);
  const VecX nu_dot = constrained_forward_dynamics(model, s, tau, contact).nu_dot;
  VecX dx(x.size());
  dx.head<3>() = s.base_linear_velocity;
  // Qdot = 1/2 (0, omega) (x) Q, omega inertial
  const Eigen::Quaterniond q(x(3), x(4), x(5), x(6));
  const Eigen::Quaterniond w(0.0, s.base_angular_velocity.x(), s.base_angular_velocity.y(),
                             s.base_angular_velocity.z());
  const Eigen::Quaterniond qd = w * q;
  dx.segment<4>(3) << 0.5 * qd.w(), 0.5 * qd.x(), 0.5 * qd.y(), 0.5 * qd.z();
  dx.segment(7, n) = s.joint_velocities;
  dx.tail(6 + n) = nu_dot;
  return dx;
}

}  // namespace

void require_finite(const SimState& state, long step) {
  const RobotState& s = state.robot;
  if (s.base_position.allFinite() && s.base_orientation.coeffs().allFinite() &&
      s.joint_positions.allFinite() && s.velocity().allFinite()) {
    return;
  }
  throw SimulationError("non-finite state at step " + std::to_string(step) + " (t = " +
                            std::to_string(state.t) + " s)",
                        step);
}

ContactSetup ContactSetup::capture(const RobotModel& model, const RobotState& state,
                                   std::vector<int> frames, double k_pos, double k_vel) {
  ContactSetup c;
  c.frames = std::move(frames);
  c.k_pos = k_pos;
  c.k_vel = k_vel;
  const Kinematics kin = compute_kinematics(model, state);
  for (int f : c.frames) c.anchors.push_back(frame_pose(model, kin, f));
  c.validate(model);
  return c;
}

void ContactSetup::validate(const RobotModel& model) const {
  if (k_pos < 0.0 || k_vel < 0.0) throw std::invalid_argument("Baumgarte gains must be >= 0");
  if (anchors.size() != frames.size()) throw std::invalid_argument("one anchor per frame");
  for (int f : frames) {
    if (f < 0 || f >= static_cast<int>(model.frames().size())) {
      throw std::invalid_argument("constrained frame index out of range");
    }
  }
}

ConstrainedAcceleration constrained_forward_dynamics(const RobotModel& model,
                                                     const RobotState& state, const VecX& tau,
                                                     const ContactSetup& contact) {
  const int n = model.dof();
  const Kinematics kin = compute_kinematics(model, state);
  const MatX m = mass_matrix(model, state, kin);
  VecX rhs = -bias_forces(model, state, kin, kGravity);
  rhs.tail(n) += tau;
  const Eigen::LLT<MatX> llt(m);

  ConstrainedAcceleration out;
  if (contact.frames.empty()) {
    out.nu_dot = llt.solve(rhs);
    out.wrench = VecX(0);
    return out;
  }
  const MatX j = stacked_contact_jacobian(model, state, kin, contact);
  const int k = static_cast<int>(j.rows());
  VecX drift(k);
  for (std::size_t c = 0; c < contact.frames.size(); ++c) {
    drift.segment<6>(6 * c) = jacobian_dot_nu(model, state, kin, contact.frames[c]);
  }
  const VecX nu = state.velocity();
  const VecX stab = 2.0 * contact.k_vel * (j * nu) + contact.k_pos * pose_error(model, kin, contact);
  const MatX m_inv_jt = llt.solve(MatX(j.transpose()));
  const VecX free_acc = llt.solve(rhs);
  MatX schur = j * m_inv_jt;
  const VecX b = -drift - stab - j * free_acc;

  if (contact.frames.size() == 1) {
    Eigen::FullPivLU<MatX> lu(schur);
    lu.setThreshold(1e-12);
    if (lu.rank() < k) {
      throw RankError("constraint KKT matrix is singular (rank " + std::to_string(lu.rank()) +
                          " of " + std::to_string(k) + ")",
                      static_cast<int>(lu.rank()));
    }
    out.wrench = lu.solve(b);
  } else {
    const double scale = std::max(1.0, schur.trace() / k);
    schur.diagonal().array() += kTwoFeetDamping * scale;
    out.wrench = schur.ldlt().solve(b);
  }
  out.nu_dot = free_acc + m_inv_jt * out.wrench;
  return out;
}

VecX constraint_pose_error(const RobotModel& model, const RobotState& state,
                           const ContactSetup& contact) {
  return pose_error(model, compute_kinematics(model, state), contact);
}

double constraint_velocity_residual(const RobotModel& model, const RobotState& state,
                                    const ContactSetup& contact) {
  if (contact.frames.empty()) return 0.0;
  const Kinematics kin = compute_kinematics(model, state);
  return (stacked_contact_jacobian(model, state, kin, contact) * state.velocity()).norm();
}

SimState step(const RobotModel& model, const SimState& state, const VecX& tau,
              const ContactSetup& contact, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  const int n = model.dof();
  const VecX x = pack(state.robot);
  const VecX k1 = derivative(model, x, tau, contact);
  const VecX k2 = derivative(model, x + 0.5 * dt * k1, tau, contact);
  const VecX k3 = derivative(model, x + 0.5 * dt * k2, tau, contact);
  const VecX k4 = derivative(model, x + dt * k3, tau, contact);
  const VecX next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  SimState out;
  out.robot = unpack(next, n);
  out.t = state.t + dt;
  out.quaternion_drift = std::abs(next.segment<4>(3).norm() - 1.0);
  return out;
}

std::size_t TrajectoryLog::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw std::out_of_range("no log column named '" + name + "'");
}

std::vector<double> TrajectoryLog::series(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[c]);
  return out;
}

void TrajectoryLog::write_csv(std::ostream& out) const {
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  char buf[32];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.12e", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

void TrajectoryLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out);
}

ScenarioSetup prepare_scenario(const RobotModel& model, const ScenarioConfig& config) {
  const int n = model.dof();
  std::vector<int> frames;
  for (const std::string& name : config.support_frames()) {
    const auto idx = model.find_frame(name);
    if (!idx) throw ConfigError("model has no frame named '" + name + "'");
    frames.push_back(*idx);
  }
  const VecX posture = config.desired_posture(n);
  const VecX offset = config.initial_offset(n);
  const Pose anchor = Pose::identity();

  SimState initial;
  initial.robot = embed_on_support(model, frames[0], anchor, posture + offset, VecX::Zero(n));
  Reference reference = make_reference(model, frames[0], anchor, posture, config.reference,
                                       config.axis, config.amplitude, config.frequency);
  ContactSetup contact =
      ContactSetup::capture(model, initial.robot, frames, config.k_pos, config.k_vel);
  BalanceController controller(model, config.gains(n), std::move(reference), config.contact,
                               frames, config.friction);
  ControllerState ctrl;
  ctrl.integral = controller.integral_at(initial.robot, 0.0);
  return ScenarioSetup{posture, initial, ctrl, std::move(contact), std::move(controller)};
}

TrajectoryLog run_scenario(const RobotModel& model, const ScenarioConfig& config,
                           const StepObserver& observer) {
  ScenarioSetup setup = prepare_scenario(model, config);
  const int n = model.dof();
  const long steps = std::lround(config.duration / config.dt);
  const long stride = std::max(1L, std::lround(1.0 / (config.log_rate * config.dt)));
  const int nf = 6 * static_cast<int>(setup.contact.frames.size());

  TrajectoryLog log;
  log.columns = {"t", "jerr_norm"};
  auto add = [&](const std::string& prefix, int count) {
    for (int i = 1; i <= count; ++i) log.columns.push_back(prefix + std::to_string(i));
  };
  add("H_", 6);
  add("Ht_", 6);
  add("I_", 6);
  add("f_", nf);
  add("tau_", n);
  for (const char* c : {"cres", "energy", "com_x", "com_y", "com_z"}) log.columns.push_back(c);

  SimState state = setup.initial;
  ControllerState ctrl = setup.controller_state;
  spdlog::debug("running '{}' for {} s ({} steps)", config.name, config.duration, steps);
  for (long i = 0;; ++i) {
    const ControlOutput out = setup.controller.evaluate(state.robot, ctrl);
    if (observer) observer(i, state, out, ctrl);
    if (i % stride == 0 || i == steps) {
      std::vector<double> row;
      row.reserve(log.columns.size());
      row.push_back(state.t);
      row.push_back((state.robot.joint_positions - setup.posture).norm());
      for (int k = 0; k < 6; ++k) row.push_back(out.momentum(k));
      for (int k = 0; k < 6; ++k) row.push_back(out.momentum_error(k));
      for (int k = 0; k < 6; ++k) row.push_back(ctrl.integral(k));
      for (int k = 0; k < nf; ++k) row.push_back(out.wrench(k));
      for (int k = 0; k < n; ++k) row.push_back(out.tau(k));
      row.push_back(constraint_velocity_residual(model, state.robot, setup.contact));
      row.push_back(total_energy(model, state.robot));
      const Vec3 com = center_of_mass(model, state.robot);
      for (int k = 0; k < 3; ++k) row.push_back(com(k));
      log.rows.push_back(std::move(row));
    }
    if (i == steps) break;
    try {
      state = step(model, state, out.tau, setup.contact, config.dt);
    } catch (const RankError& e) {
      // a diverging state usually shows up here before it turns into NaN
      throw SimulationError(fmt::format("integration failed at step {} (t = {:g}): {}", i + 1,
                                        (i + 1) * config.dt, e.what()),
                            i + 1);
    }
    state.t = (i + 1) * config.dt;
    require_finite(state, i + 1);
    ctrl = integrate_momentum_error(ctrl, out.integrand, config.dt);
    ctrl.time = state.t;
    if (i > 0 && (i + 1) % 10000 == 0) {
      spdlog::debug("t = {:.1f} s, jerr = {:.3e}", state.t,
                    (state.robot.joint_positions - setup.posture).norm());
    }
  }
  return log;
}

}  // namespace balance
