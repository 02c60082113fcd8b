#pragma once

#include <string>
#include <vector>

#include "balance/types.hpp"

namespace balance {

/// min 1/2 x'Px + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QpProblem {
  MatX hessian;
  VecX gradient;
  MatX a_eq;
  VecX b_eq;
  MatX a_in;
  VecX b_in;

  int size() const { return static_cast<int>(gradient.size()); }
  double objective(const VecX& x) const { return 0.5 * x.dot(hessian * x) + gradient.dot(x); }
  /// Throws std::invalid_argument on inconsistent sizes or a Hessian that is
  /// not symmetric positive definite.
  void validate() const;
};

enum class QpStatus { optimal, infeasible, max_iter };

std::string to_string(QpStatus status);

struct QpSolution {
  QpStatus status = QpStatus::infeasible;
  VecX x;
  VecX eq_dual;            ///< lambda
  VecX in_dual;            ///< mu, zero on inactive rows
  std::vector<int> active;
  int iterations = 0;
  std::vector<double> objective_trace;  ///< objective after every primal step
  /// Inequality rows violated at the least-norm equality-feasible point,
  /// filled when the problem is infeasible.
  std::vector<int> violated;
};

struct QpOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

struct KktResiduals {
  double stationarity = 0.0;
  double equality = 0.0;
  double inequality = 0.0;     ///< max(0, A_in x - b_in)
  double dual = 0.0;           ///< max(0, -mu)
  double complementarity = 0.0;
  double max() const;
};

/// Residuals recomputed from scratch, independent of the solver path.
KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Dual active-set method (Goldfarb-Idnani) after eliminating the
/// equalities with a QR null-space basis. The most violated inequality
/// enters first, lowest index on ties.
class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {}) : options_(options) {}
  QpSolution solve(const QpProblem& problem);
  const QpOptions& options() const { return options_; }

 private:
  QpOptions options_;
  // scratch for the reduced problem
  MatX reduced_hessian_inv_;
  MatX reduced_constraints_;  // rows n_i' with n_i' y >= r_i
  VecX reduced_bounds_;
};

inline QpSolution solve(const QpProblem& problem, const QpOptions& options = {}) {
  return QpSolver(options).solve(problem);
}

/// x0 + A^+(b - A x0): the point of {Ax = b} closest to x0. Throws RankError
/// when A is rank deficient and the system is inconsistent.
VecX solve_equality_ls(const MatX& a, const VecX& b, const VecX& x0);

/// Debug dump for reproducing a problem outside the controller.
std::string to_json(const QpProblem& problem);

}  // namespace balance
