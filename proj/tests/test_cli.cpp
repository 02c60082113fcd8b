#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "test_support.hpp"

using namespace balance;
using namespace balance::cli;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("balance_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string read(const std::string& file) {
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Short modified-gain scenario on the desk humanoid.
  std::string short_config(const std::string& name, const std::string& extra = "") const {
    return write(name + ".toml", "name = \"" + name + "\"\nmodel = \"" +
                                     testkit::data_path("models/desk_humanoid.json") +
                                     "\"\ncontroller = \"modified\"\n"
                                     "posture = [0.0, 0.0, -0.3, 0.6, -0.3, 0.0, 0.0, 0.0, -0.3, "
                                     "0.6, -0.3, 0.0, 0.2, 0.2]\nduration = 0.3\ndt = 1e-3\n" +
                                     extra +
                                     "\n[gains]\nkp = 10.0\nki = 10.0\nkp_joint = 10.0\n"
                                     "kd_joint = 3.0\n\n[perturbation]\nrandom_magnitude = 0.02\n"
                                     "seed = 4\n");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ModelInfoReportsDof) {
  std::ostringstream out;
  EXPECT_EQ(cmd_model_info(testkit::data_path("models/desk_humanoid.json"), 0, out), ok);
  EXPECT_NE(out.str().find("n = 14"), std::string::npos);
  EXPECT_NE(out.str().find("block-diagonality residual"), std::string::npos);
  out.str("");
  EXPECT_EQ(cmd_model_info(testkit::data_path("models/pendulum_foot.json"), 0, out), ok);
  EXPECT_NE(out.str().find("n = 7"), std::string::npos);
}

TEST_F(CliTest, MalformedModelIsConfigError) {
  std::ostringstream out;
  EXPECT_EQ(cmd_model_info(write("bad.json", "{\"links\": [1, 2"), 0, out), config_error);
  EXPECT_EQ(cmd_model_info(path("absent.json"), 0, out), config_error);
}

TEST_F(CliTest, MissingModelInConfig) {
  const std::string cfg = write("m.toml", "model = \"nowhere/robot.json\"\n");
  std::ostringstream out;
  EXPECT_EQ(cmd_simulate(cfg, path("o.csv"), std::nullopt, out), config_error);
  EXPECT_EQ(cmd_linearize(cfg, path("o.json"), out), config_error);
  EXPECT_EQ(cmd_simulate(path("absent.toml"), path("o.csv"), std::nullopt, out), config_error);
}

TEST_F(CliTest, SimulateIsDeterministic) {
  const std::string cfg = short_config("det");
  std::ostringstream out;
  ASSERT_EQ(cmd_simulate(cfg, path("a.csv"), std::nullopt, out), ok);
  ASSERT_EQ(cmd_simulate(cfg, path("b.csv"), std::nullopt, out), ok);
  ASSERT_EQ(cmd_simulate(cfg, path("c.csv"), 5, out), ok);
  EXPECT_EQ(read(path("a.csv")), read(path("b.csv")));
  EXPECT_NE(read(path("a.csv")), read(path("c.csv")));
  EXPECT_NE(out.str().find("final jerr_norm"), std::string::npos);
  EXPECT_EQ(read(path("a.csv")).substr(0, 12), "t,jerr_norm,");
}

TEST_F(CliTest, LinearizeShippedScenarios) {
  std::ostringstream out;
  ASSERT_EQ(cmd_linearize(testkit::data_path("scenarios/stable_one_foot.toml"), path("s.json"), out),
            ok);
  ASSERT_EQ(
      cmd_linearize(testkit::data_path("scenarios/unstable_one_foot.toml"), path("u.json"), out),
      ok);
  const auto stable = nlohmann::json::parse(read(path("s.json")));
  const auto unstable = nlohmann::json::parse(read(path("u.json")));
  for (const char* key : {"model", "q_jd", "mode", "eigenvalues", "max_re", "q1_min_eig",
                          "q2_min_eig", "vdot_max_eig", "verdict", "fd_agreement"}) {
    EXPECT_TRUE(stable.contains(key)) << key;
  }
  EXPECT_LT(stable["max_re"].get<double>(), 0.0);
  EXPECT_EQ(stable["verdict"], "certified");
  EXPECT_EQ(stable["q_jd"].size(), 14u);
  EXPECT_EQ(stable["eigenvalues"].size(), 28u);
  EXPECT_LT(stable["fd_agreement"].get<double>(), 1e-4);
  EXPECT_GT(unstable["max_re"].get<double>(), 0.0);
  EXPECT_EQ(unstable["mode"], "classical");
  EXPECT_EQ(unstable["verdict"], "unstable");
  EXPECT_EQ(cmd_linearize(testkit::data_path("scenarios/two_feet_qp.toml"), path("t.json"), out),
            config_error);
}

TEST_F(CliTest, CompareIdenticalConfigs) {
  const std::string cfg = short_config("same");
  std::ostringstream out;
  ASSERT_EQ(cmd_compare(cfg, cfg, path("c.csv"), std::nullopt, out), ok);
  std::istringstream csv(read(path("c.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,jerr_a,jerr_b");
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    EXPECT_EQ(line.substr(a + 1, b - a - 1), line.substr(b + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 31);
  EXPECT_NE(out.str().find("same"), std::string::npos);

  const std::string other = short_config("longer", "log_rate = 50.0\n");
  EXPECT_EQ(cmd_compare(cfg, other, path("d.csv"), std::nullopt, out), config_error);
}

TEST_F(CliTest, SummaryVerdicts) {
  TrajectoryLog log;
  log.columns = {"t", "jerr_norm", "Ht_1", "Ht_2", "Ht_3", "Ht_4", "Ht_5", "Ht_6"};
  for (int i = 0; i <= 20; ++i) {
    log.rows.push_back({0.5 * i, 0.01 * std::exp(0.25 * i), 3.0, 4.0, 0, 0, 0, 0});
  }
  RunSummary s = summarize(log);
  EXPECT_EQ(s.verdict, "diverging");
  EXPECT_DOUBLE_EQ(s.reference_jerr, 0.01 * std::exp(2.5));
  EXPECT_DOUBLE_EQ(s.max_htilde, 5.0);
  for (auto& r : log.rows) r[1] = 1e-4;
  EXPECT_EQ(summarize(log).verdict, "converged");
  for (auto& r : log.rows) r[1] = 0.2;
  EXPECT_EQ(summarize(log).verdict, "bounded");
}
