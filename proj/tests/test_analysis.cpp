#include <gtest/gtest.h>

#include <random>

#include "balance/analysis.hpp"
#include "balance/scenario.hpp"
#include "test_support.hpp"

using namespace balance;
using namespace balance::testkit;

namespace {

struct Case {
  RobotModel model;
  int sole;
  VecX posture;
};

Case desk() {
  RobotModel m = desk_humanoid();
  const int sole = m.frame_index("left_sole");
  return {std::move(m), sole, desk_posture()};
}

Case pendulum() {
  RobotModel m = pendulum_foot();
  const int sole = m.frame_index("left_sole");
  return {std::move(m), sole, pendulum_posture()};
}

std::vector<GainSet> gain_sets(int n) {
  std::mt19937_64 rng(3);
  std::vector<GainSet> out;
  out.push_back(GainSet::uniform(GainMode::modified, n, 5.0, 2.0, 10.0, 3.0));
  GainSet g = GainSet::uniform(GainMode::modified, n, 8.0, 4.0, 6.0, 2.0);
  MatX a(n, n);
  for (int i = 0; i < n; ++i) a.col(i) = random_vector(n, rng);
  g.kp_joint += a * a.transpose();
  g.kd_joint.diagonal() += random_vector(n, rng).cwiseAbs();
  out.push_back(g);
  out.push_back(GainSet::uniform(GainMode::classical, n, 5.0, 2.0, 40.0, 3.0));
  return out;
}

}  // namespace

TEST(Linearization, TopBlocksAreExact) {
  const Case c = desk();
  const int n = c.model.dof();
  const LinearizedSystem sys =
      analytic_linearization(c.model, c.sole, c.posture, gain_sets(n)[0]);
  EXPECT_EQ(sys.a.rows(), 2 * n);
  EXPECT_TRUE(sys.a.topLeftCorner(n, n).isZero(0.0));
  EXPECT_TRUE(sys.a.topRightCorner(n, n).isIdentity(0.0));
}

TEST(Linearization, ZeroIntegralAndStiffnessGiveZeroA1) {
  const Case c = desk();
  const int n = c.model.dof();
  GainSet g = GainSet::uniform(GainMode::modified, n, 5.0, 0.0, 0.0, 3.0);
  const LinearizedSystem sys = analytic_linearization(c.model, c.sole, c.posture, g);
  EXPECT_TRUE(sys.a1().isZero(0.0));
  EXPECT_GT(sys.a2().norm(), 1.0);
}

TEST(Linearization, MatchesFiniteDifferences) {
  for (const Case& c : {desk(), pendulum()}) {
    const int n = c.model.dof();
    for (const GainSet& g : gain_sets(n)) {
      const LinearizedSystem sys = analytic_linearization(c.model, c.sole, c.posture, g);
      const FdLinearization fd = fd_linearization(c.model, c.sole, c.posture, g);
      EXPECT_LT(balance::relative_error(sys.a, fd.a), 1e-4) << c.model.name() << " " << to_string(g.mode);
      EXPECT_LT(fd.step_agreement, 1e-4);
    }
  }
}

TEST(Linearization, DampingEntersA2Linearly) {
  const Case c = pendulum();
  const int n = c.model.dof();
  GainSet g = gain_sets(n)[1];
  const LinearizedSystem base = analytic_linearization(c.model, c.sole, c.posture, g);
  const MatX kd = g.kd_joint;
  g.kd_joint *= 2.0;
  const LinearizedSystem doubled = analytic_linearization(c.model, c.sole, c.posture, g);
  const MatX& m = base.joint_mass;
  const MatX& nl = base.nullspace;
  const MatX expected = base.a2() - m.llt().solve(MatX(nl * kd * nl * m));
  EXPECT_LT(testkit::relative_error(doubled.a2(), expected), 1e-12);
  EXPECT_TRUE(doubled.a1().isApprox(base.a1(), 1e-14));
}

TEST(Linearization, RejectsWrongSizes) {
  const Case c = pendulum();
  GainSet g = GainSet::uniform(GainMode::modified, 6, 1, 1, 1, 1);
  EXPECT_THROW(analytic_linearization(c.model, c.sole, c.posture, g), std::invalid_argument);
  g = GainSet::uniform(GainMode::modified, 7, 1, 1, 1, 1);
  EXPECT_THROW(analytic_linearization(c.model, c.sole, VecX::Zero(3), g), std::invalid_argument);
  EXPECT_THROW(fd_linearization(c.model, c.sole, c.posture, g, 0.0), std::invalid_argument);
}

TEST(Spectrum, OrderingAndMargin) {
  const SpectralReport r = spectral_report(-MatX::Identity(4, 4));
  ASSERT_EQ(r.eigenvalues.size(), 4u);
  for (const auto& e : r.eigenvalues) EXPECT_NEAR(std::abs(e + 1.0), 0.0, 1e-14);
  EXPECT_DOUBLE_EQ(r.margin, 1.0);

  MatX a = MatX::Zero(4, 4);
  a(0, 0) = -3.0;
  a(1, 1) = 0.5;
  a(2, 3) = 2.0;
  a(3, 2) = -2.0;
  const SpectralReport s = spectral_report(a);
  EXPECT_NEAR(s.max_real, 0.5, 1e-14);
  EXPECT_NEAR(s.eigenvalues[1].imag(), 2.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[2].imag(), -2.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[3].real(), -3.0, 1e-14);
  EXPECT_THROW(spectral_report(MatX::Zero(2, 3)), std::invalid_argument);
}

TEST(Lyapunov, CertifiesModifiedGains) {
  for (const Case& c : {desk(), pendulum()}) {
    const int n = c.model.dof();
    for (int k = 0; k < 2; ++k) {
      const GainSet g = gain_sets(n)[k];
      const LinearizedSystem sys = analytic_linearization(c.model, c.sole, c.posture, g);
      const LyapunovCertificate cert = lyapunov_certificate(sys, g);
      EXPECT_TRUE(cert.certified) << c.model.name() << ": " << cert.reason;
      EXPECT_GT(cert.q1_min_eig, 0.0);
      EXPECT_GT(cert.q2_min_eig, 0.0);
      EXPECT_LT(cert.max_real, 0.0);
      // the cross terms of A'P + PA cancel
      EXPECT_LT(cert.s.topRightCorner(n, n).norm(), 1e-8 * cert.p_norm);
    }
  }
}

TEST(Lyapunov, ClassicalGainsAreNotCertified) {
  const Case c = desk();
  const GainSet g = gain_sets(c.model.dof())[2];
  const LyapunovCertificate cert =
      lyapunov_certificate(analytic_linearization(c.model, c.sole, c.posture, g), g);
  EXPECT_FALSE(cert.certified);
  EXPECT_NE(cert.reason.find("classical"), std::string::npos);
}

TEST(Lyapunov, ZeroIntegralGainIsNotCertified) {
  const Case c = pendulum();
  GainSet g = gain_sets(c.model.dof())[0];
  g.ki.setZero();
  const LyapunovCertificate cert =
      lyapunov_certificate(analytic_linearization(c.model, c.sole, c.posture, g), g);
  EXPECT_FALSE(cert.certified);
  EXPECT_EQ(cert.reason, "Q1 is not positive definite");
}

TEST(Spectrum, ShippedScenarios) {
  auto max_re = [](const std::string& name) {
    const ScenarioConfig cfg = load_scenario(data_path("scenarios/" + name + ".toml"));
    const RobotModel model = load_model_file(cfg.model_path());
    const int sole = model.frame_index(cfg.support_frames().at(0));
    const GainSet g = cfg.gains(model.dof());
    return spectral_report(
               analytic_linearization(model, sole, cfg.desired_posture(model.dof()), g).a)
        .max_real;
  };
  EXPECT_GT(max_re("unstable_one_foot"), 0.0);
  EXPECT_LT(max_re("stable_one_foot"), 0.0);
}

TEST(Response, LinearModelTracksSimulation) {
  for (const Case& c : {desk(), pendulum()}) {
    const int n = c.model.dof();
    const GainSet g = GainSet::uniform(GainMode::modified, n, 10.0, 10.0, 10.0, 3.0);
    std::mt19937_64 rng(11);
    VecX x0 = random_vector(2 * n, rng);
    x0 *= 1e-3 / x0.norm();
    const ResponseComparison r = compare_linear_response(c.model, c.sole, c.posture, g, x0, 0.5);
    EXPECT_LT(r.relative(), 0.05) << c.model.name();
    EXPECT_GT(r.max_norm, 0.0);
  }
}

TEST(Response, MatrixExponential) {
  MatX a(2, 2);
  a << 0, 1, -4, 0;
  VecX x0(2);
  x0 << 1, 0;
  const VecX x = linear_response(a, x0, 0.3);
  EXPECT_NEAR(x(0), std::cos(0.6), 1e-13);
  EXPECT_NEAR(x(1), -2.0 * std::sin(0.6), 1e-13);
}
