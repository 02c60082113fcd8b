#include "balance/linalg.hpp"

#include <cmath>
#include <limits>

namespace balance {

Mat3 rpy_to_rotation(const Vec3& rpy) {
  const Eigen::AngleAxisd roll(rpy.x(), Vec3::UnitX());
  const Eigen::AngleAxisd pitch(rpy.y(), Vec3::UnitY());
  const Eigen::AngleAxisd yaw(rpy.z(), Vec3::UnitZ());
  return (yaw * pitch * roll).toRotationMatrix();
}

Mat3 so3_exp(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-12) {
    return Mat3::Identity() + skew(v);
  }
  return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Pseudoinverse pseudoinverse(const MatX& a, double cutoff) {
  Pseudoinverse out;
  out.pinv = MatX::Zero(a.cols(), a.rows());
  if (a.size() == 0) {
    return out;
  }
  Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& sigma = svd.singularValues();
  out.sigma_max = sigma(0);
  out.sigma_min = sigma(sigma.size() - 1);
  const double threshold = cutoff * out.sigma_max;
  VecX inv = VecX::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > threshold) {
      inv(i) = 1.0 / sigma(i);
      ++out.rank;
    }
  }
  out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

MatX nullspace_projector(const MatX& a, const MatX& a_pinv) {
  return MatX::Identity(a.cols(), a.cols()) - a_pinv * a;
}

double condition_number(const MatX& a) {
  Eigen::JacobiSVD<MatX> svd(a);
  const VecX& sigma = svd.singularValues();
  const double smallest = sigma(sigma.size() - 1);
  if (smallest <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return sigma(0) / smallest;
}

double max_symmetric_eigenvalue(const MatX& a) {
  const MatX sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double min_symmetric_eigenvalue(const MatX& a) {
  const MatX sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace balance
