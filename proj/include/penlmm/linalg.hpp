#pragma once

// Dense symmetric positive definite primitives. Storage is Eigen; the
// factorization adds diagonal jitter when the input is numerically singular
// and reports how much was needed.

#include <Eigen/Dense>

namespace penlmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  Index dim() const { return lower_.rows(); }
  const Matrix& lower() const { return lower_; }
  double jitter_applied() const { return jitter_; }

  // x with (L L^T) x = b.
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  // L^{-1} b, so that b^T A^{-1} b = |L^{-1} b|^2.
  Vector solve_lower(const Vector& b) const;
  double log_det() const;
  Matrix inverse() const;

 private:
  friend CholeskyFactor cholesky(const Matrix& a);

  Matrix lower_;
  double jitter_ = 0.0;
};

// Jitter starts at 1e-10 and grows by x10 up to 1e-4 before giving up.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

CholeskyFactor cholesky(const Matrix& a);
Vector solve_spd(const CholeskyFactor& f, const Vector& b);
double log_det(const CholeskyFactor& f);

}  // namespace penlmm
