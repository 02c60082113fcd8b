#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace balance::cli;
  configure_logging();

  CLI::App app{"Momentum-based balance control: simulation and stability analysis"};
  app.require_subcommand(1);

  std::string config, config_b, out, model;
  std::optional<std::uint64_t> seed;
  std::uint64_t info_seed = 0;

  auto* simulate = app.add_subcommand("simulate", "run a scenario and write its trajectory CSV");
  simulate->add_option("config", config, "scenario TOML")->required();
  simulate->add_option("--out", out, "CSV output path")->required();
  simulate->add_option("--seed", seed, "override the perturbation seed");

  auto* linearize = app.add_subcommand("linearize", "write the linearisation report as JSON");
  linearize->add_option("config", config, "scenario TOML")->required();
  linearize->add_option("--out", out, "JSON output path")->required();

  auto* compare = app.add_subcommand("compare", "run two scenarios and join their joint errors");
  compare->add_option("config_a", config, "first scenario TOML")->required();
  compare->add_option("config_b", config_b, "second scenario TOML")->required();
  compare->add_option("--out", out, "CSV output path")->required();
  compare->add_option("--seed", seed, "override both perturbation seeds");

  auto* info = app.add_subcommand("model-info", "print a model summary");
  info->add_option("model", model, "model JSON")->required();
  info->add_option("--seed", info_seed, "seed of the random configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(config_error);
  }

  if (*simulate) return cmd_simulate(config, out, seed, std::cout);
  if (*linearize) return cmd_linearize(config, out, std::cout);
  if (*compare) return cmd_compare(config, config_b, out, seed, std::cout);
  return cmd_model_info(model, info_seed, std::cout);
}
