#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "balance/scenario.hpp"
#include "balance/sim.hpp"

namespace balance::cli {

enum ExitCode : int {
  ok = 0,
  failure = 1,
  config_error = 2,
  simulation_error = 3,
  rank_error = 4,
};

/// Summary of one trajectory log.
struct RunSummary {
  double final_jerr = 0.0;
  double max_jerr = 0.0;
  double max_htilde = 0.0;
  double reference_jerr = 0.0;  ///< jerr_norm at t = 5 s
  std::string verdict;
};

RunSummary summarize(const TrajectoryLog& log);

/// Linearisation report of a one-foot scenario, as written by `linearize`.
nlohmann::json linearization_report(const ScenarioConfig& config);

/// Joined jerr_norm columns of two runs; time grids must agree.
TrajectoryLog join_runs(const TrajectoryLog& a, const TrajectoryLog& b);

int cmd_simulate(const std::string& config, const std::string& out,
                 std::optional<std::uint64_t> seed, std::ostream& summary);
int cmd_linearize(const std::string& config, const std::string& out, std::ostream& summary);
int cmd_compare(const std::string& config_a, const std::string& config_b, const std::string& out,
                std::optional<std::uint64_t> seed, std::ostream& summary);
int cmd_model_info(const std::string& model, std::uint64_t seed, std::ostream& summary);

/// Reads BALANCE_LOG and routes diagnostics to stderr.
void configure_logging();

}  // namespace balance::cli
