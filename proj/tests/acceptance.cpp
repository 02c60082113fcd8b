// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "balance/analysis.hpp"
#include "balance/centroidal.hpp"
#include "balance/linalg.hpp"
#include "balance/multibody.hpp"
#include "balance/scenario.hpp"
#include "balance/sim.hpp"
#include "qp_oracle.hpp"
#include "test_support.hpp"

using namespace balance;
using namespace balance::testkit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  // Records `value` against an upper bound.
  void below(const std::string& what, double value, double bound) {
    const bool ok = value < bound;
    pass = pass && ok;
    notes.push_back(fmt::format("{} {:.3g}{}{:.3g}", what, value, ok ? " < " : " >= ", bound));
  }
  void above(const std::string& what, double value, double bound) {
    const bool ok = value > bound;
    pass = pass && ok;
    notes.push_back(fmt::format("{} {:.3g}{}{:.3g}", what, value, ok ? " > " : " <= ", bound));
  }
  void within(const std::string& what, double value, double lo, double hi) {
    const bool ok = value >= lo && value <= hi;
    pass = pass && ok;
    notes.push_back(fmt::format("{} {:.3g} {} [{:.3g}, {:.3g}]", what, value, ok ? "in" : "outside",
                                lo, hi));
  }
};

std::vector<RobotModel> bundled_models() { return {desk_humanoid(), pendulum_foot()}; }

VecX posture_of(const RobotModel& model) {
  return model.dof() == 14 ? desk_posture() : pendulum_posture();
}

ScenarioConfig shipped(const std::string& name) {
  return load_scenario(data_path("scenarios/" + name + ".toml"));
}

// Shared long runs: the unstable and stable one-foot scenarios and the
// two-feet scenario are simulated once and inspected by several criteria.
struct OneFootRun {
  TrajectoryLog log;
  std::vector<double> t;
  std::vector<double> htilde;  ///< ||H~|| at every step
  double max_cres = 0.0;
  double max_quat_drift = 0.0;
  double seconds = 0.0;
};

OneFootRun run_one_foot(const std::string& name) {
  const ScenarioConfig cfg = shipped(name);
  const RobotModel model = load_model_file(cfg.model_path());
  const ScenarioSetup setup = prepare_scenario(model, cfg);
  OneFootRun r;
  const auto start = Clock::now();
  r.log = run_scenario(model, cfg, [&](long, const SimState& s, const ControlOutput& out,
                                       const ControllerState&) {
    r.t.push_back(s.t);
    r.htilde.push_back(out.momentum_error.norm());
    r.max_cres = std::max(r.max_cres, constraint_velocity_residual(model, s.robot, setup.contact));
    r.max_quat_drift = std::max(r.max_quat_drift, s.quaternion_drift);
  });
  r.seconds = seconds_since(start);
  return r;
}

struct TwoFeetRun {
  double max_kkt = 0.0;
  int non_optimal = 0;
  long steps = 0;
  double hdot_error = 0.0;  ///< relative to the contact wrench term
};

TwoFeetRun run_two_feet() {
  const ScenarioConfig cfg = shipped("two_feet_qp");
  const RobotModel model = load_model_file(cfg.model_path());
  std::vector<int> frames;
  for (const auto& f : cfg.support_frames()) frames.push_back(model.frame_index(f));
  const double mg = model.total_mass() * kGravity;

  TwoFeetRun r;
  std::vector<Vec6> h, rate;
  std::vector<double> scale;
  run_scenario(model, cfg, [&](long, const SimState& s, const ControlOutput& out,
                               const ControllerState&) {
    r.max_kkt = std::max(r.max_kkt, out.kkt.max());
    r.non_optimal += out.qp_status != QpStatus::optimal;
    ++r.steps;
    // Hdot = sum of contact wrenches about the CoM minus weight
    const Kinematics kin = compute_kinematics(model, s.robot);
    const Vec3 com = center_of_mass(model, s.robot);
    Vec6 contact = Vec6::Zero();
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const Vec6 w = out.wrench.segment<6>(6 * k);
      const Vec3 r_k = frame_pose(model, kin, frames[k]).position - com;
      contact.head<3>() += w.head<3>();
      contact.tail<3>() += r_k.cross(w.head<3>()) + w.tail<3>();
    }
    Vec6 hd = contact;
    hd(2) -= mg;
    h.push_back(out.momentum);
    rate.push_back(hd);
    scale.push_back(contact.norm());
  });
  for (std::size_t k = 1; k + 1 < h.size(); ++k) {
    const Vec6 fd = (h[k + 1] - h[k - 1]) / (2.0 * cfg.dt);
    r.hdot_error = std::max(r.hdot_error, (fd - rate[k]).norm() / scale[k]);
  }
  return r;
}

double value_at(const std::vector<double>& t, const std::vector<double>& v, double when) {
  const auto it = std::lower_bound(t.begin(), t.end(), when - 1e-9);
  return v[std::min<std::size_t>(it - t.begin(), v.size() - 1)];
}

// 1. block-diagonal transformed mass matrix and gravity
Verdict structure() {
  Verdict v;
  const auto start = Clock::now();
  double block = 0.0, top_left = 0.0, gravity = 0.0;
  for (const RobotModel& model : bundled_models()) {
    std::mt19937_64 rng(101);
    const double m = model.total_mass();
    const int n = model.dof();
    for (int trial = 0; trial < 100; ++trial) {
      const RobotState s = random_state(model, rng, 2.0);
      const TransformedDynamics d = transformed_dynamics(model, s);
      block = std::max(block, d.mass_bar.topRightCorner(6, n).norm() / d.mass_bar.norm());
      top_left = std::max(top_left, (d.mass_bar.topLeftCorner<3, 3>() - m * Mat3::Identity()).norm());
      VecX expected = VecX::Zero(6 + n);
      expected(2) = m * kGravity;
      // G_bar from the RNEA gravity vector, not the stored closed form
      const VecX g_bar = d.transform.inverse.transpose() * gravity_forces(model, s);
      gravity = std::max(gravity, (g_bar - expected).cwiseAbs().maxCoeff());
    }
  }
  v.below("|M_bj|/|M|", block, 1e-8);
  v.below("|M_b11 - m 1|", top_left, 1e-9);
  v.below("|G - m g e3|", gravity, 1e-10);
  v.below("runtime s", seconds_since(start), 10.0);
  return v;
}

// 2. momentum computed two ways, and the momentum rate identity in simulation
Verdict momentum(const TwoFeetRun& two_feet) {
  Verdict v;
  double worst = 0.0;
  for (const RobotModel& model : bundled_models()) {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 100; ++trial) {
      const RobotState s = random_state(model, rng, 2.0);
      const Vec6 by_matrix = centroidal_momentum_matrix(model, s) * s.velocity();
      const Vec6 by_links = momentum_from_links(model, s).vector();
      worst = std::max(worst, (by_matrix - by_links).norm() / by_links.norm());
    }
  }
  v.below("J_G nu vs link sum", worst, 1e-8);
  v.below("Hdot identity (10 s two-feet run)", two_feet.hdot_error, 1e-3);
  return v;
}

// 3. linear rows of the constrained CMM are the gradient of m x_c(q_j)
Verdict integrability() {
  Verdict v;
  double worst = 0.0;
  for (const RobotModel& model : bundled_models()) {
    std::mt19937_64 rng(303);
    const int sole = model.frame_index("left_sole");
    const int n = model.dof();
    const Pose anchor{rpy_to_rotation(Vec3(0.05, 0.1, -0.2)), Vec3(0.1, -0.3, 0.0)};
    const VecX zero = VecX::Zero(n);
    for (int trial = 0; trial < 20; ++trial) {
      const VecX q = random_vector(n, rng, 0.8);
      const MatX jl =
          constrained_cmm(model, embed_on_support(model, sole, anchor, q, zero), sole).topRows<3>();
      MatX fd(3, n);
      const double h = 1e-6;
      for (int j = 0; j < n; ++j) {
        const VecX dq = h * VecX::Unit(n, j);
        fd.col(j) = model.total_mass() *
                    (center_of_mass(model, embed_on_support(model, sole, anchor, q + dq, zero)) -
                     center_of_mass(model, embed_on_support(model, sole, anchor, q - dq, zero))) /
                    (2.0 * h);
      }
      worst = std::max(worst, (jl - fd).norm() / fd.norm());
    }
  }
  v.below("J_G^L vs FD", worst, 1e-4);
  return v;
}

std::vector<GainSet> gain_sets(int n) {
  std::mt19937_64 rng(404);
  std::vector<GainSet> out;
  out.push_back(GainSet::uniform(GainMode::modified, n, 5.0, 2.0, 10.0, 3.0));
  GainSet g = GainSet::uniform(GainMode::modified, n, 8.0, 4.0, 6.0, 2.0);
  MatX a(n, n);
  for (int i = 0; i < n; ++i) a.col(i) = random_vector(n, rng);
  g.kp_joint += a * a.transpose();
  g.kd_joint.diagonal() += random_vector(n, rng).cwiseAbs();
  out.push_back(g);
  out.push_back(GainSet::uniform(GainMode::modified, n, 20.0, 1.0, 50.0, 8.0));
  return out;
}

// 4. analytic linearisation against central differences
Verdict linearization() {
  Verdict v;
  const auto start = Clock::now();
  double worst = 0.0;
  int cases = 0;
  for (const RobotModel& model : bundled_models()) {
    const int sole = model.frame_index("left_sole");
    const VecX q_d = posture_of(model);
    for (const GainSet& g : gain_sets(model.dof())) {
      const MatX a = analytic_linearization(model, sole, q_d, g).a;
      const MatX fd = fd_linearization(model, sole, q_d, g).a;
      worst = std::max(worst, balance::relative_error(a, fd));
      ++cases;
    }
  }
  v.below(fmt::format("analytic vs FD ({} cases)", cases), worst, 1e-4);
  v.below("runtime s", seconds_since(start), 60.0);
  return v;
}

// 5. Lyapunov certificate on the shipped modified-gain one-foot scenarios
Verdict lyapunov() {
  Verdict v;
  for (const char* name : {"stable_one_foot", "modified_one_foot"}) {
    const ScenarioConfig cfg = shipped(name);
    const RobotModel model = load_model_file(cfg.model_path());
    const int n = model.dof();
    const GainSet g = cfg.gains(n);
    const LinearizedSystem sys = analytic_linearization(
        model, model.frame_index(cfg.support_frames().at(0)), cfg.desired_posture(n), g);
    const LyapunovCertificate c = lyapunov_certificate(sys, g);
    v.above(std::string(name) + " min eig Q1", c.q1_min_eig, 0.0);
    v.above("min eig Q2", c.q2_min_eig, 0.0);
    v.below("max eig sym(A'P+PA) / |P|", c.vdot_max_eig / c.p_norm, 1e-8);
    v.below("max Re", c.max_real, 0.0);
  }
  return v;
}

// 6. divergence with classical gains, convergence with modified gains
Verdict instability(const OneFootRun& unstable, const OneFootRun& stable) {
  Verdict v;
  const std::vector<double> t = unstable.log.series("t");
  const std::vector<double> jerr = unstable.log.series("jerr_norm");
  const double j5 = value_at(t, jerr, 5.0);
  const double j60 = value_at(t, jerr, 60.0);
  v.above("jerr(60)/jerr(5)", j60 / j5, 10.0);

  double peak = 0.0, late = 0.0;
  for (std::size_t i = 0; i < unstable.t.size(); ++i) {
    if (unstable.t[i] < 5.0) {
      peak = std::max(peak, unstable.htilde[i]);
    } else {
      late = std::max(late, unstable.htilde[i]);
    }
  }
  v.below("max |H~| (t >= 5) / initial peak", late / peak, 0.1);

  const ScenarioConfig cfg = shipped("unstable_one_foot");
  const RobotModel model = load_model_file(cfg.model_path());
  const int n = model.dof();
  const double max_re =
      spectral_report(analytic_linearization(model, model.frame_index(cfg.support_frames().at(0)),
                                             cfg.desired_posture(n), cfg.gains(n))
                          .a)
          .max_real;
  v.above("unstable max Re", max_re, 0.0);
  v.below("stable final jerr", stable.log.series("jerr_norm").back(), 1e-3);
  v.below("runtime s", unstable.seconds + stable.seconds, 300.0);
  return v;
}

// 7. two-feet QP: KKT along a run, symmetric weight sharing, enumeration oracle
Verdict two_feet_qp(const TwoFeetRun& run) {
  Verdict v;
  v.below("max KKT residual over run", run.max_kkt, 1e-8);
  v.below("non-optimal QP steps", run.non_optimal, 1);

  const RobotModel model = desk_humanoid();
  const std::vector<int> soles{model.frame_index("left_sole"), model.frame_index("right_sole")};
  const VecX q = desk_posture();
  const RobotState s = embed_on_support(model, soles[0], Pose::identity(), q, VecX::Zero(14));
  const TransformedDynamics d = transformed_dynamics(model, s, soles);
  const ControlOutput out =
      two_feet_controller(d, s, Vec6::Zero(), GainSet::uniform(GainMode::modified, 14, 5, 2, 10, 3),
                          q, FrictionParams{});
  const double half = 0.5 * model.total_mass() * kGravity;
  v.below("|f_z - m g / 2|", std::max(std::abs(out.wrench(2) - half), std::abs(out.wrench(8) - half)),
          1e-6);

  std::mt19937_64 rng(707);
  double worst = 0.0;
  int mismatched_status = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const QpProblem p = random_problem(rng, 1 + trial % 6, 0, trial % 4);
    const QpSolution sol = solve(p);
    const auto oracle = enumerate(p);
    if (!oracle) {
      mismatched_status += sol.status != QpStatus::infeasible;
      continue;
    }
    if (sol.status != QpStatus::optimal) {
      ++mismatched_status;
      continue;
    }
    worst = std::max(worst, (sol.x - *oracle).norm());
  }
  v.below("QP vs enumeration (50 problems)", worst, 1e-8);
  v.below("status mismatches", mismatched_status, 1);
  return v;
}

// 8. integrator order, energy, quaternion norm and constraint drift
Verdict simulator(const OneFootRun& long_run) {
  Verdict v;
  {
    const RobotModel model = desk_humanoid();
    std::mt19937_64 rng(808);
    SimState s0;
    s0.robot = random_state(model, rng, 0.5, 1.0);
    const VecX tau = random_vector(model.dof(), rng, 0.5);
    auto flat = [](const RobotState& r) {
      VecX x(13 + 2 * r.joint_positions.size());
      x << r.base_position, r.base_orientation.w(), r.base_orientation.x(), r.base_orientation.y(),
          r.base_orientation.z(), r.joint_positions, r.velocity();
      return x;
    };
    auto run = [&](double dt) {
      SimState s = s0;
      const long steps = std::lround(1.0 / dt);
      for (long i = 0; i < steps; ++i) s = step(model, s, tau, {}, dt);
      return flat(s.robot);
    };
    const VecX ref = run(0.02 / 16.0);
    v.within("RK4 step-halving ratio", (run(0.02) - ref).norm() / (run(0.01) - ref).norm(), 12.0,
             20.0);
  }
  {
    const RobotModel model = pendulum_foot();
    const int sole = model.frame_index("left_sole");
    std::mt19937_64 rng(809);
    Pose ceiling;
    ceiling.rotation = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
    ceiling.position = Vec3(0.0, 0.0, 2.0);
    SimState s;
    s.robot = embed_on_support(model, sole, ceiling, pendulum_posture(),
                               random_vector(model.dof(), rng, 0.3));
    const ContactSetup contact = ContactSetup::capture(model, s.robot, {sole});
    const double e0 = total_energy(model, s.robot);
    double drift = 0.0;
    for (int i = 0; i < 5000; ++i) {
      s = step(model, s, VecX::Zero(model.dof()), contact, 1e-3);
      drift = std::max(drift, std::abs(total_energy(model, s.robot) - e0));
    }
    v.below("passive energy drift (5 s)", drift / std::abs(e0), 1e-4);
  }
  v.below("|Q| drift per step", long_run.max_quat_drift, 1e-9);
  v.below("|J nu| over 60 s", long_run.max_cres, 1e-6);
  return v;
}

// 9. small perturbations follow the linearisation
Verdict consistency() {
  Verdict v;
  const ScenarioConfig cfg = shipped("stable_one_foot");
  const RobotModel model = load_model_file(cfg.model_path());
  const int n = model.dof();
  const int sole = model.frame_index(cfg.support_frames().at(0));
  std::mt19937_64 rng(909);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    VecX x0 = random_vector(2 * n, rng);
    x0 *= 1e-3 / x0.norm();
    worst = std::max(worst, compare_linear_response(model, sole, cfg.desired_posture(n),
                                                    cfg.gains(n), x0, 0.5, cfg.dt)
                                .relative());
  }
  v.below("|x_sim - exp(At) x0| / |exp(At) x0| over 0.5 s", worst, 0.05);
  return v;
}

void report(int id, const std::string& title, const std::function<Verdict()>& check, int& failed) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v.pass = false;
    v.notes.push_back(std::string("exception: ") + e.what());
  }
  std::string detail;
  for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
  std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  failed += !v.pass;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  int failed = 0;

  OneFootRun unstable, stable;
  TwoFeetRun two_feet;
  std::string setup_error;
  try {
    unstable = run_one_foot("unstable_one_foot");
    stable = run_one_foot("stable_one_foot");
    two_feet = run_two_feet();
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto needs_runs = [&](std::function<Verdict()> f) {
    return [f, &setup_error]() -> Verdict {
      if (!setup_error.empty()) throw std::runtime_error("scenario run failed: " + setup_error);
      return f();
    };
  };

  report(1, "transformed mass matrix and gravity", structure, failed);
  report(2, "momentum dual path and rate identity", needs_runs([&] { return momentum(two_feet); }),
         failed);
  report(3, "CoM integrability", integrability, failed);
  report(4, "linearisation vs finite differences", linearization, failed);
  report(5, "Lyapunov certificate", lyapunov, failed);
  report(6, "instability evidence", needs_runs([&] { return instability(unstable, stable); }),
         failed);
  report(7, "two-feet QP", needs_runs([&] { return two_feet_qp(two_feet); }), failed);
  report(8, "simulator integrity", needs_runs([&] { return simulator(unstable); }), failed);
  report(9, "linear vs nonlinear response", consistency, failed);

  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
