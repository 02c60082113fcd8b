#pragma once

#include <complex>
#include <string>
#include <vector>

#include "balance/control.hpp"
#include "balance/model.hpp"
#include "balance/types.hpp"

namespace balance {

// Linearisation of the one-foot closed loop about (q_j^d, 0) in the minimal
// coordinates x = (q_j - q_j^d, qdot_j). The support sole is held at the
// identity pose.

struct LinearizedSystem {
  GainMode mode = GainMode::modified;
  VecX q_d;
  MatX a;  ///< [0, 1; A1, A2]

  // Constituents at the equilibrium (transformed quantities).
  MatX joint_mass;      ///< M_j
  Mat6 base_mass;       ///< M_b
  Mat6 base_jacobian;   ///< J_b
  MatX joint_jacobian;  ///< J_j
  MatX lambda;
  MatX lambda_pinv;
  MatX nullspace;

  int dof() const { return static_cast<int>(q_d.size()); }
  MatX a1() const { return a.bottomLeftCorner(dof(), dof()); }
  MatX a2() const { return a.bottomRightCorner(dof(), dof()); }
};

/// A1 = -M^-1 L^+ W^-1 K_i W J_j - M^-1 N Kbar_p N M, with W = M_b J_b^-1, and
/// the same with K_p and Kbar_d for A2. In classical mode the postural terms
/// are -M^-1 N K_p^j and -M^-1 N K_d^j. Throws RankError for rank-deficient
/// Lambda.
LinearizedSystem analytic_linearization(const RobotModel& model, int support_frame,
                                        const VecX& q_d, const GainSet& gains);

struct FdLinearization {
  MatX a;
  /// ||A(h) - A(h/10)||_F / ||A(h)||_F
  double step_agreement = 0.0;
};

/// Central differences of the simulated closed loop (no Baumgarte terms),
/// with the integral replaced by its closed form in q_j.
FdLinearization fd_linearization(const RobotModel& model, int support_frame, const VecX& q_d,
                                 const GainSet& gains, double h = 1e-6);

/// Closed-loop joint accelerations at (q, qdot) with the sole anchored at
/// identity and the integral from its closed form.
VecX closed_loop_acceleration(const RobotModel& model, const BalanceController& controller,
                              const VecX& q, const VecX& qdot);

struct SpectralReport {
  std::vector<std::complex<double>> eigenvalues;  ///< by real part, descending
  double max_real = 0.0;
  double margin = 0.0;  ///< -max_real
};

SpectralReport spectral_report(const MatX& a);

struct LyapunovCertificate {
  MatX q1;
  MatX q2;
  MatX p;  ///< blockdiag(M Q1 M, M Q2 M)
  MatX s;  ///< A'P + PA
  double q1_min_eig = 0.0;
  double q2_min_eig = 0.0;
  double vdot_max_eig = 0.0;  ///< of sym(S)
  double p_norm = 0.0;
  double max_real = 0.0;
  bool certified = false;
  std::string reason;
};

LyapunovCertificate lyapunov_certificate(const LinearizedSystem& sys, const GainSet& gains,
                                         double rel_tol = 1e-8);

/// exp(A t) x0.
VecX linear_response(const MatX& a, const VecX& x0, double t);

struct ResponseComparison {
  double max_error = 0.0;  ///< max_t ||x_sim(t) - exp(At) x0||
  double max_norm = 0.0;   ///< max_t ||exp(At) x0||
  double relative() const { return max_norm > 0.0 ? max_error / max_norm : max_error; }
};

/// Simulates the constrained closed loop (hold reference, sole anchored at
/// identity) from x0 = (q - q_d, qdot) and compares it with the linearisation.
ResponseComparison compare_linear_response(const RobotModel& model, int support_frame,
                                           const VecX& q_d, const GainSet& gains, const VecX& x0,
                                           double horizon, double dt = 1e-3);

/// ||A - B||_F / ||B||_F.
double relative_error(const MatX& a, const MatX& b);

}  // namespace balance
