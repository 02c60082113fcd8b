#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <random>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "balance/analysis.hpp"
#include "balance/centroidal.hpp"

namespace balance::cli {

namespace {

// Runs `body`, mapping library exceptions to exit codes.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return config_error;
  } catch (const ModelError& e) {
    spdlog::error("{}", e.what());
    return config_error;
  } catch (const SimulationError& e) {
    spdlog::error("{}", e.what());
    return simulation_error;
  } catch (const RankError& e) {
    spdlog::error("{} (rank {})", e.what(), e.rank());
    return rank_error;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return config_error;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return failure;
  }
}

RobotModel load_model_checked(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ModelError("model file not found: " + path.string());
  return load_model_file(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

double htilde_norm(const TrajectoryLog& log, std::size_t row) {
  const std::size_t first = log.column("Ht_1");
  double s = 0.0;
  for (std::size_t k = 0; k < 6; ++k) s += log.rows[row][first + k] * log.rows[row][first + k];
  return std::sqrt(s);
}

TrajectoryLog run_config(const ScenarioConfig& config) {
  const RobotModel model = load_model_checked(config.model_path());
  return run_scenario(model, config);
}

}  // namespace

RunSummary summarize(const TrajectoryLog& log) {
  RunSummary s;
  if (log.rows.empty()) return s;
  const std::vector<double> jerr = log.series("jerr_norm");
  s.final_jerr = jerr.back();
  s.max_jerr = *std::max_element(jerr.begin(), jerr.end());
  for (std::size_t i = 0; i < log.rows.size(); ++i) s.max_htilde = std::max(s.max_htilde, htilde_norm(log, i));
  // growth is measured from t = 5 s (or mid-run for short runs)
  const std::vector<double> t = log.series("t");
  const double t_ref = std::min(5.0, 0.5 * t.back());
  const auto ref = std::lower_bound(t.begin(), t.end(), t_ref - 1e-9) - t.begin();
  s.reference_jerr = jerr[ref];
  if (s.final_jerr < 1e-3) {
    s.verdict = "converged";
  } else if (s.final_jerr >= 10.0 * s.reference_jerr) {
    s.verdict = "diverging";
  } else {
    s.verdict = "bounded";
  }
  return s;
}

nlohmann::json linearization_report(const ScenarioConfig& config) {
  if (config.contact != ContactMode::one_foot) {
    throw ConfigError("linearize needs a one_foot scenario");
  }
  const RobotModel model = load_model_checked(config.model_path());
  const int n = model.dof();
  const int sole = model.frame_index(config.support_frames().at(0));
  const GainSet gains = config.gains(n);
  const VecX q_d = config.desired_posture(n);

  const LinearizedSystem sys = analytic_linearization(model, sole, q_d, gains);
  const FdLinearization fd = fd_linearization(model, sole, q_d, gains);
  const SpectralReport spectrum = spectral_report(sys.a);
  const LyapunovCertificate cert = lyapunov_certificate(sys, gains);

  nlohmann::json eig = nlohmann::json::array();
  for (const auto& e : spectrum.eigenvalues) eig.push_back({e.real(), e.imag()});
  std::string verdict;
  if (cert.certified) {
    verdict = "certified";
  } else if (spectrum.max_real < 0.0) {
    verdict = "stable";
  } else {
    verdict = "unstable";
  }
  nlohmann::json report;
  report["model"] = model.name();
  report["q_jd"] = std::vector<double>(q_d.data(), q_d.data() + n);
  report["mode"] = to_string(gains.mode);
  report["eigenvalues"] = eig;
  report["max_re"] = spectrum.max_real;
  report["q1_min_eig"] = cert.q1_min_eig;
  report["q2_min_eig"] = cert.q2_min_eig;
  report["vdot_max_eig"] = cert.vdot_max_eig;
  report["p_norm"] = cert.p_norm;
  report["verdict"] = verdict;
  report["reason"] = cert.reason;
  report["fd_agreement"] = relative_error(sys.a, fd.a);
  return report;
}

TrajectoryLog join_runs(const TrajectoryLog& a, const TrajectoryLog& b) {
  if (a.rows.size() != b.rows.size()) {
    throw ConfigError("compare needs matching duration, dt and log_rate");
  }
  const std::size_t ta = a.column("t"), tb = b.column("t");
  const std::size_t ja = a.column("jerr_norm"), jb = b.column("jerr_norm");
  TrajectoryLog out;
  out.columns = {"t", "jerr_a", "jerr_b"};
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (std::abs(a.rows[i][ta] - b.rows[i][tb]) > 1e-9) {
      throw ConfigError("compare needs matching duration, dt and log_rate");
    }
    out.rows.push_back({a.rows[i][ta], a.rows[i][ja], b.rows[i][jb]});
  }
  return out;
}

int cmd_simulate(const std::string& config, const std::string& out,
                 std::optional<std::uint64_t> seed, std::ostream& summary) {
  return guarded([&] {
    ScenarioConfig cfg = load_scenario(config);
    if (seed) cfg.seed = *seed;
    std::ofstream file = open_output(out);
    const TrajectoryLog log = run_config(cfg);
    log.write_csv(file);
    const RunSummary s = summarize(log);
    summary << fmt::format("{}: final jerr_norm {:.6e}, max |Ht| {:.6e}, {}\n", cfg.name,
                           s.final_jerr, s.max_htilde, s.verdict);
    return static_cast<int>(ok);
  });
}

int cmd_linearize(const std::string& config, const std::string& out, std::ostream& summary) {
  return guarded([&] {
    const ScenarioConfig cfg = load_scenario(config);
    std::ofstream file = open_output(out);
    const nlohmann::json report = linearization_report(cfg);
    file << report.dump(2) << "\n";
    summary << fmt::format("{}: max Re {:.6e}, {}, fd agreement {:.2e}\n", cfg.name,
                           report["max_re"].get<double>(), report["verdict"].get<std::string>(),
                           report["fd_agreement"].get<double>());
    return static_cast<int>(ok);
  });
}

int cmd_compare(const std::string& config_a, const std::string& config_b, const std::string& out,
                std::optional<std::uint64_t> seed, std::ostream& summary) {
  return guarded([&] {
    ScenarioConfig a = load_scenario(config_a);
    ScenarioConfig b = load_scenario(config_b);
    if (seed) a.seed = b.seed = *seed;
    std::ofstream file = open_output(out);
    auto run_b = std::async(std::launch::async, [&] { return run_config(b); });
    const TrajectoryLog log_a = run_config(a);
    const TrajectoryLog log_b = run_b.get();
    join_runs(log_a, log_b).write_csv(file);

    summary << fmt::format("{:<24} {:>14} {:>14} {:>14}  {}\n", "scenario", "final jerr",
                           "max jerr", "max |Ht|", "verdict");
    for (const auto& [name, log] : {std::pair{a.name, &log_a}, std::pair{b.name, &log_b}}) {
      const RunSummary s = summarize(*log);
      summary << fmt::format("{:<24} {:>14.6e} {:>14.6e} {:>14.6e}  {}\n", name, s.final_jerr,
                             s.max_jerr, s.max_htilde, s.verdict);
    }
    return static_cast<int>(ok);
  });
}

int cmd_model_info(const std::string& path, std::uint64_t seed, std::ostream& summary) {
  return guarded([&] {
    const RobotModel model = load_model_checked(path);
    const int n = model.dof();
    summary << fmt::format("model {}: n = {}, m = {:.6f} kg\n", model.name(), n,
                           model.total_mass());
    const RobotState zero = RobotState::zero(model);
    const Vec3 c = center_of_mass(model, zero);
    summary << fmt::format("CoM at zero pose: ({:.6f}, {:.6f}, {:.6f})\n", c.x(), c.y(), c.z());

    summary << fmt::format("{:<20} {:>10} {:>10} {:>10} {:>10}\n", "link", "mass", "com_x",
                           "com_y", "com_z");
    for (const Link& l : model.links()) {
      summary << fmt::format("{:<20} {:>10.4f} {:>10.4f} {:>10.4f} {:>10.4f}\n", l.name, l.mass,
                             l.com.x(), l.com.y(), l.com.z());
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    RobotState s = RobotState::zero(model);
    s.base_position = Vec3(uni(rng), uni(rng), uni(rng));
    s.base_orientation = Eigen::Quaterniond(uni(rng), uni(rng), uni(rng), uni(rng)).normalized();
    for (int j = 0; j < n; ++j) s.joint_positions(j) = uni(rng);
    const TransformedDynamics dyn = transformed_dynamics(model, s);
    const double residual =
        dyn.mass_bar.topRightCorner(6, n).norm() / dyn.mass_bar.norm();
    summary << fmt::format("block-diagonality residual (seed {}): {:.3e}\n", seed, residual);

    for (std::size_t f = 0; f < model.frames().size(); ++f) {
      const TransformedDynamics d = transformed_dynamics(model, zero, {static_cast<int>(f)});
      const Eigen::JacobiSVD<Mat6> svd(d.contacts[0].base_block());
      const auto& sv = svd.singularValues();
      summary << fmt::format("cond(J_b) at zero pose, {}: {:.6e}\n", model.frames()[f].name,
                             sv(0) / sv(5));
    }
    return static_cast<int>(ok);
  });
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("balance");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("BALANCE_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace balance::cli
