#include "balance/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "balance/linalg.hpp"

namespace balance {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_rows(const MatX& a, const VecX& b, int d, const char* what) {
  if (a.rows() != b.size() || (a.rows() > 0 && a.cols() != d)) {
    throw std::invalid_argument(std::string("QP ") + what + " constraint has inconsistent sizes");
  }
}

}  // namespace

void QpProblem::validate() const {
  const int d = size();
  if (hessian.rows() != d || hessian.cols() != d) {
    throw std::invalid_argument("QP Hessian must be d x d");
  }
  check_rows(a_eq, b_eq, d, "equality");
  check_rows(a_in, b_in, d, "inequality");
  if (a_eq.rows() > d) throw std::invalid_argument("QP has more equalities than variables");
  if (d == 0) return;
  if (!hessian.isApprox(hessian.transpose(), 1e-12)) {
    throw std::invalid_argument("QP Hessian is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatX> eig(hessian, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi) || !(hi > 0.0)) {
    throw std::invalid_argument("QP Hessian is not positive definite");
  }
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, equality, inequality, dual, complementarity});
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  KktResiduals r;
  VecX grad = p.hessian * s.x + p.gradient;
  if (p.a_eq.rows() > 0) grad += p.a_eq.transpose() * s.eq_dual;
  if (p.a_in.rows() > 0) grad += p.a_in.transpose() * s.in_dual;
  r.stationarity = grad.norm();
  if (p.a_eq.rows() > 0) r.equality = (p.a_eq * s.x - p.b_eq).cwiseAbs().maxCoeff();
  if (p.a_in.rows() > 0) {
    const VecX slack = p.a_in * s.x - p.b_in;
    r.inequality = std::max(0.0, slack.maxCoeff());
    r.dual = std::max(0.0, -s.in_dual.minCoeff());
    r.complementarity = slack.cwiseProduct(s.in_dual).cwiseAbs().maxCoeff();
  }
  return r;
}

QpSolution QpSolver::solve(const QpProblem& problem) {
  problem.validate();
  const int d = problem.size();
  const int me = static_cast<int>(problem.a_eq.rows());
  const int mi = static_cast<int>(problem.a_in.rows());
  const double tol = options_.tol;

  QpSolution sol;
  sol.eq_dual = VecX::Zero(me);
  sol.in_dual = VecX::Zero(mi);

  // Least-norm particular solution and null-space basis of A_eq.
  VecX x0 = VecX::Zero(d);
  MatX z = MatX::Identity(d, d);
  if (me > 0) {
    Eigen::ColPivHouseholderQR<MatX> qr(problem.a_eq.transpose());
    qr.setThreshold(kPinvCutoff);
    const int rank = static_cast<int>(qr.rank());
    const MatX q = qr.householderQ() * MatX::Identity(d, d);
    z = q.rightCols(d - rank);
    x0 = problem.a_eq.completeOrthogonalDecomposition().solve(problem.b_eq);
    const double res = (problem.a_eq * x0 - problem.b_eq).norm();
    if (res > tol * (1.0 + problem.b_eq.norm())) {
      sol.x = x0;
      return sol;
    }
  }

  const int k = static_cast<int>(z.cols());
  const MatX hr = z.transpose() * problem.hessian * z;
  const VecX cr = z.transpose() * (problem.hessian * x0 + problem.gradient);
  const Eigen::LLT<MatX> chol(hr);
  reduced_hessian_inv_ = k > 0 ? MatX(chol.solve(MatX::Identity(k, k))) : MatX(0, 0);
  reduced_constraints_ = MatX(k, mi);
  reduced_bounds_ = VecX(mi);
  if (mi > 0) {
    reduced_constraints_ = -(problem.a_in * z).transpose();
    reduced_bounds_ = -(problem.b_in - problem.a_in * x0);
  }
  const MatX& hinv = reduced_hessian_inv_;
  const MatX& n = reduced_constraints_;
  const VecX& r = reduced_bounds_;

  auto full_x = [&](const VecX& y) -> VecX { return k > 0 ? VecX(x0 + z * y) : x0; };

  VecX y = k > 0 ? VecX(-hinv * cr) : VecX(0);
  std::vector<int> active;
  VecX u(0);
  sol.objective_trace.push_back(problem.objective(full_x(y)));

  auto finish = [&](QpStatus status) {
    sol.status = status;
    sol.x = full_x(y);
    sol.active = active;
    for (std::size_t i = 0; i < active.size(); ++i) sol.in_dual(active[i]) = u(i);
    if (me > 0) {
      VecX rhs = -(problem.hessian * sol.x + problem.gradient);
      if (mi > 0) rhs -= problem.a_in.transpose() * sol.in_dual;
      sol.eq_dual = problem.a_eq.transpose().completeOrthogonalDecomposition().solve(rhs);
    }
    if (status == QpStatus::infeasible && mi > 0) {
      const VecX slack = problem.a_in * x0 - problem.b_in;
      for (int i = 0; i < mi; ++i) {
        if (slack(i) > tol) sol.violated.push_back(i);
      }
    }
    return sol;
  };

  auto is_active = [&](int i) {
    for (int a : active) {
      if (a == i) return true;
    }
    return false;
  };

  while (true) {
    // Most violated constraint, lowest index on ties.
    int p = -1;
    double worst = -tol;
    for (int i = 0; i < mi; ++i) {
      if (is_active(i)) continue;
      const double s = (k > 0 ? n.col(i).dot(y) : 0.0) - r(i);
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) return finish(QpStatus::optimal);

    VecX u_plus(active.size() + 1);
    u_plus << u, 0.0;
    while (true) {
      if (++sol.iterations > options_.max_iter) return finish(QpStatus::max_iter);
      const int na = static_cast<int>(active.size());
      // Work in the metric of the reduced Hessian: with H = L L', the
      // step is L^-T times the part of L^-1 n_p orthogonal to L^-1 N_A.
      const VecX np = k > 0 ? VecX(chol.matrixL().solve(VecX(n.col(p)))) : VecX(0);
      VecX step = VecX::Zero(k);
      VecX rdir(na);
      VecX tail = np;
      if (na > 0) {
        MatX na_mat(k, na);
        for (int j = 0; j < na; ++j) na_mat.col(j) = n.col(active[j]);
        const MatX scaled = chol.matrixL().solve(na_mat);
        Eigen::HouseholderQR<MatX> qr(scaled);
        const MatX q = qr.householderQ() * MatX::Identity(k, k);
        const VecX dq = q.transpose() * np;
        rdir = qr.matrixQR().topLeftCorner(na, na).triangularView<Eigen::Upper>().solve(
            dq.head(na));
        tail = q.rightCols(k - na) * dq.tail(k - na);
      }
      const bool independent = k > 0 && tail.norm() > 1e-12 * (1.0 + np.norm());
      if (independent) step = chol.matrixU().solve(tail);

      // Partial step: the first active multiplier that reaches zero.
      double t1 = kInf;
      int drop = -1;
      for (int j = 0; j < na; ++j) {
        if (rdir(j) > 1e-14) {
          const double t = u_plus(j) / rdir(j);
          if (t < t1) {
            t1 = t;
            drop = j;
          }
        }
      }
      // Full step: constraint p becomes satisfied.
      double t2 = kInf;
      const double curvature = independent ? step.dot(n.col(p)) : 0.0;
      if (curvature > 0.0) {
        t2 = -((n.col(p).dot(y)) - r(p)) / curvature;
      }
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return finish(QpStatus::infeasible);

      if (na > 0) u_plus.head(na) -= t * rdir;
      u_plus(na) += t;
      if (std::isfinite(t2)) {
        y += t * step;
        sol.objective_trace.push_back(problem.objective(full_x(y)));
      }
      if (t == t2) {
        active.push_back(p);
        u = u_plus;
        break;
      }
      // Drop the blocking constraint and retry with p still pending.
      active.erase(active.begin() + drop);
      VecX shrunk(na);
      for (int j = 0, o = 0; j <= na; ++j) {
        if (j != drop) shrunk(o++) = u_plus(j);
      }
      u_plus = shrunk;
      u = u_plus.head(na - 1);
    }
  }
}

VecX solve_equality_ls(const MatX& a, const VecX& b, const VecX& x0) {
  if (a.cols() != x0.size() || a.rows() != b.size()) {
    throw std::invalid_argument("solve_equality_ls: inconsistent sizes");
  }
  const Pseudoinverse pi = pseudoinverse(a);
  const VecX x = x0 + pi.pinv * (b - a * x0);
  if (pi.rank < a.rows()) {
    const double res = (a * x - b).norm();
    if (res > 1e-8 * (1.0 + b.norm())) {
      throw RankError("solve_equality_ls: rank-deficient system is inconsistent", pi.rank);
    }
  }
  return x;
}

std::string to_json(const QpProblem& p) {
  auto mat = [](const MatX& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json doc{{"hessian", mat(p.hessian)}, {"gradient", vec(p.gradient)},
                     {"a_eq", mat(p.a_eq)},       {"b_eq", vec(p.b_eq)},
                     {"a_in", mat(p.a_in)},       {"b_in", vec(p.b_in)}};
  return doc.dump(2);
}

}  // namespace balance
