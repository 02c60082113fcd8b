#pragma once

#include "balance/types.hpp"

namespace balance {

/// S(x) such that S(x) y = x × y.
inline Mat3 skew(const Vec3& x) {
  Mat3 s;
  s << 0.0, -x.z(), x.y(), x.z(), 0.0, -x.x(), -x.y(), x.x(), 0.0;
  return s;
}

/// Rotation matrix from roll-pitch-yaw, R = Rz(yaw) Ry(pitch) Rx(roll).
Mat3 rpy_to_rotation(const Vec3& rpy);

/// exp(S(v)) via Rodrigues.
Mat3 so3_exp(const Vec3& v);

/// Rotation vector of R, the inverse of so3_exp for angles below pi.
Vec3 so3_log(const Mat3& r);

/// Relative singular-value cutoff used by every pseudoinverse in the library.
inline constexpr double kPinvCutoff = 1e-10;

struct Pseudoinverse {
  MatX pinv;
  int rank = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;  ///< smallest singular value (of min(rows, cols))
};

/// Moore-Penrose pseudoinverse through SVD, discarding singular values
/// below cutoff * sigma_max.
Pseudoinverse pseudoinverse(const MatX& a, double cutoff = kPinvCutoff);

/// Orthogonal projector onto null(a): 1 - a^+ a.
MatX nullspace_projector(const MatX& a, const MatX& a_pinv);

/// 2-norm condition number (inf when singular).
double condition_number(const MatX& a);

/// Largest eigenvalue of the symmetric part of a.
double max_symmetric_eigenvalue(const MatX& a);

/// Smallest eigenvalue of the symmetric part of a.
double min_symmetric_eigenvalue(const MatX& a);

}  // namespace balance
