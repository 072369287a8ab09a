#include "penlmm/linalg.hpp"

#include <cmath>
#include <sstream>

#include "penlmm/error.hpp"

namespace penlmm {

namespace {

void check_dim(Index expected, Index got, const char* what) {
  if (expected != got) {
    std::ostringstream msg;
    msg << what << ": expected dimension " << expected << ", got " << got;
    throw DimensionMismatch(msg.str());
  }
}

bool try_factor(const Matrix& a, double jitter, Matrix& lower) {
  const Index n = a.rows();
  lower.setZero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = a(j, j) + jitter - lower.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      return false;
    }
    const double ljj = std::sqrt(d);
    lower(j, j) = ljj;
    for (Index i = j + 1; i < n; ++i) {
      const double s = lower.row(i).head(j).dot(lower.row(j).head(j));
      lower(i, j) = (a(i, j) - s) / ljj;
    }
  }
  return true;
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << "cholesky: matrix is " << a.rows() << "x" << a.cols() << ", not square";
    throw DimensionMismatch(msg.str());
  }
  if (!a.allFinite()) {
    throw NotPositiveDefinite("cholesky: matrix has non-finite entries");
  }
  const double scale = a.size() > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  const double asym = a.size() > 0 ? (a - a.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym > 1e-10 * scale) {
    throw NotSymmetric("cholesky: matrix is not symmetric");
  }

  CholeskyFactor f;
  if (try_factor(a, 0.0, f.lower_)) {
    return f;
  }
  for (double jitter = kJitterStart; jitter <= kJitterMax * (1.0 + 1e-9); jitter *= 10.0) {
    if (try_factor(a, jitter, f.lower_)) {
      f.jitter_ = jitter;
      return f;
    }
  }
  throw NotPositiveDefinite("cholesky: matrix is not positive definite (jitter up to 1e-4 exhausted)");
}

Vector CholeskyFactor::solve_lower(const Vector& b) const {
  check_dim(dim(), b.size(), "solve_lower");
  return lower_.triangularView<Eigen::Lower>().solve(b);
}

Vector CholeskyFactor::solve(const Vector& b) const {
  check_dim(dim(), b.size(), "solve_spd");
  Vector y = lower_.triangularView<Eigen::Lower>().solve(b);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
  check_dim(dim(), b.rows(), "solve_spd");
  Matrix y = lower_.triangularView<Eigen::Lower>().solve(b);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

double CholeskyFactor::log_det() const {
  double s = 0.0;
  for (Index j = 0; j < dim(); ++j) {
    s += std::log(lower_(j, j));
  }
  return 2.0 * s;
}

Matrix CholeskyFactor::inverse() const {
  Matrix inv = solve(Matrix(Matrix::Identity(dim(), dim())));
  return 0.5 * (inv + inv.transpose());
}

Vector solve_spd(const CholeskyFactor& f, const Vector& b) { return f.solve(b); }

double log_det(const CholeskyFactor& f) { return f.log_det(); }

}  // namespace penlmm
