#pragma once

// Grouped linear mixed-effects model
//
//   y_i = X_i beta + Z_i b_i + e_i,  b_i ~ N(0, Psi),  e_i ~ N(0, sigma^2 I)
//
// with marginal covariance V_i = Z_i Psi Z_i^T + sigma^2 I. Psi is stored through
// its Cholesky factor L (Psi = L L^T) so every unconstrained theta gives a
// positive semidefinite Psi. The residual variance is carried on the log scale,
// rho = log sigma^2.

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "penlmm/linalg.hpp"

namespace penlmm {

struct Group {
  std::string id;
  Vector y;
  Matrix x;  // n_i x p
  Matrix z;  // n_i x q
};

class GroupedDataset {
 public:
  GroupedDataset() = default;

  // Z_i is filled from the listed columns of X_i; any z already present in
  // `groups` is overwritten.
  GroupedDataset(std::vector<Group> groups, std::vector<int> random_effect_columns);

  // Z_i taken as given. Used for masked designs and synthetic checks.
  static GroupedDataset with_random_design(std::vector<Group> groups);

  Index p() const { return p_; }
  Index q() const { return q_; }
  Index n_total() const { return n_total_; }
  Index num_groups() const { return static_cast<Index>(groups_.size()); }
  const std::vector<Group>& groups() const { return groups_; }
  const Group& group(Index i) const { return groups_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& random_effect_columns() const { return random_columns_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  GroupedDataset with_random_columns(std::vector<int> columns) const;
  // Same q, but every Z_i is zero: V_i collapses to sigma^2 I.
  GroupedDataset without_random_effects() const;

  Matrix stacked_x() const;
  Vector stacked_y() const;

 private:
  void validate();

  std::vector<Group> groups_;
  std::vector<int> random_columns_;
  std::vector<std::string> warnings_;
  Index p_ = 0;
  Index q_ = 0;
  Index n_total_ = 0;
};

enum class CovarianceKind { IdentityMultiple, Diagonal, General };

const char* to_string(CovarianceKind kind);
CovarianceKind covariance_kind_from_string(const std::string& name);

// Psi = L L^T. theta holds the free entries of L:
//   IdentityMultiple: L = theta_0 I
//   Diagonal:         L = diag(theta)
//   General:          lower triangle of L, row by row: (0,0), (1,0), (1,1), (2,0), ...
class CovarianceStructure {
 public:
  CovarianceStructure() = default;
  CovarianceStructure(CovarianceKind kind, Index q, Vector theta);

  // Psi = variance * I.
  static CovarianceStructure scaled_identity(CovarianceKind kind, Index q, double variance);
  static Index num_params(CovarianceKind kind, Index q);

  CovarianceKind kind() const { return kind_; }
  Index q() const { return q_; }
  Index num_params() const { return theta_.size(); }
  const Vector& theta() const { return theta_; }
  void set_theta(Index j, double value) { theta_(j) = value; }

  Matrix factor() const;
  Matrix psi() const;
  // d Psi / d theta_j.
  Matrix psi_derivative(Index j) const;

 private:
  CovarianceKind kind_ = CovarianceKind::IdentityMultiple;
  Index q_ = 0;
  Vector theta_;
};

// phi = (beta, theta, rho). Coordinates are numbered beta_0..beta_{p-1}, then
// theta, then rho, which is also the cycling order of the solver.
struct ParameterVector {
  Vector beta;
  CovarianceStructure cov;
  double rho = 0.0;

  double sigma2() const;
  Index p() const { return beta.size(); }
  Index size() const { return beta.size() + cov.num_params() + 1; }
  bool is_beta(Index j) const { return j < beta.size(); }
  double coordinate(Index j) const;
  void set_coordinate(Index j, double value);
};

// Per-coefficient penalty weights. 0 leaves a coefficient unpenalized and
// +inf freezes it at zero.
class PenaltyWeights {
 public:
  PenaltyWeights() = default;
  explicit PenaltyWeights(Vector weights);

  // Weight 1 everywhere except the intercept (column 0) and the random-effect
  // columns of `data`, which are unpenalized.
  static PenaltyWeights defaults(const GroupedDataset& data);
  static PenaltyWeights with_unpenalized(Index p, std::span<const int> unpenalized);

  Index size() const { return w_.size(); }
  double operator[](Index k) const { return w_(k); }
  const Vector& values() const { return w_; }
  bool frozen(Index k) const { return w_(k) == std::numeric_limits<double>::infinity(); }
  bool unpenalized(Index k) const { return w_(k) == 0.0; }
  bool penalized(Index k) const { return w_(k) > 0.0 && !frozen(k); }
  Index num_penalized() const;

  // sum_k w_k |beta_k|; throws InfeasibleFrozenCoefficient if a frozen beta is nonzero.
  double penalty(const Vector& beta) const;

 private:
  Vector w_;
};

Matrix marginal_covariance(const Matrix& z, const CovarianceStructure& cov, double sigma2);
CholeskyFactor group_covariance(const Matrix& z, const ParameterVector& phi);

// Full negative log-likelihood including the N_T log(2 pi) / 2 constant.
double neg_log_likelihood(const GroupedDataset& data, const ParameterVector& phi);
// 1/2 log|V| + 1/2 r^T V^{-1} r + lambda sum_k w_k |beta_k| (no 2 pi constant).
double objective(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                 const PenaltyWeights& w);
// Partial derivatives of the smooth part g = 1/2 log|V| + 1/2 r^T V^{-1} r.
double gradient_beta(const GroupedDataset& data, const ParameterVector& phi, Index k);
// r indexes (theta, rho): r < q* is theta_r, r == q* is rho.
double gradient_eta(const GroupedDataset& data, const ParameterVector& phi, Index r);
// Diagonal of the Fisher information; j indexes the full coordinate vector.
double fisher_diagonal(const GroupedDataset& data, const ParameterVector& phi, Index j);

// Cached evaluation of the model at one parameter value. Factorizations depend
// on (theta, rho) only; beta enters through the per-group residuals, which can
// be updated one coordinate at a time.
class MarginalState {
 public:
  MarginalState(const GroupedDataset& data, const ParameterVector& phi);

  const GroupedDataset& data() const { return *data_; }
  const ParameterVector& phi() const { return phi_; }

  // Refactorizes every V_i. Throws NotPositiveDefinite.
  void set_variance(const CovarianceStructure& cov, double rho);
  void set_beta(Index k, double value);
  // Recomputes residuals from scratch, removing incremental drift.
  void refresh_residuals();

  double log_det() const { return log_det_; }
  double quad_form() const;
  double smooth() const { return 0.5 * (log_det_ + quad_form()); }
  double neg_log_likelihood() const;
  // g evaluated at the current beta with different variance parameters;
  // +inf when a V_i cannot be factorized.
  double smooth_with_variance(const CovarianceStructure& cov, double rho) const;

  double gradient_beta(Index k) const;
  double fisher_beta(Index k) const;
  double gradient_eta(Index r) const;
  double fisher_eta(Index r) const;
  double max_jitter() const { return max_jitter_; }

  const std::vector<Vector>& residuals() const { return residuals_; }

 private:
  void factorize();
  void ensure_vinv_x() const;
  Vector vinv_residual(std::size_t i) const;

  const GroupedDataset* data_;
  ParameterVector phi_;
  std::vector<CholeskyFactor> factors_;
  std::vector<Matrix> vinv_;
  std::vector<Matrix> ztvz_;  // Z_i^T V_i^{-1} Z_i
  std::vector<Vector> residuals_;
  double log_det_ = 0.0;
  double max_jitter_ = 0.0;

  mutable bool vinv_x_valid_ = false;
  mutable std::vector<Matrix> vinv_x_;
  mutable Vector x_vinv_x_diag_;
};

}  // namespace penlmm
