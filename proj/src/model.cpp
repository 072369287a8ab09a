#include "penlmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "penlmm/error.hpp"

namespace penlmm {

// -------------------------------------------------------------------------
// GroupedDataset
// -------------------------------------------------------------------------

GroupedDataset::GroupedDataset(std::vector<Group> groups, std::vector<int> random_effect_columns)
    : groups_(std::move(groups)), random_columns_(std::move(random_effect_columns)) {
  for (auto& g : groups_) {
    g.z.resize(g.x.rows(), static_cast<Index>(random_columns_.size()));
    for (std::size_t c = 0; c < random_columns_.size(); ++c) {
      const int col = random_columns_[c];
      if (col < 0 || col >= g.x.cols()) {
        throw DimensionMismatch("random-effect column " + std::to_string(col) +
                                " is outside the fixed-effects design");
      }
      g.z.col(static_cast<Index>(c)) = g.x.col(col);
    }
  }
  validate();
}

GroupedDataset GroupedDataset::with_random_design(std::vector<Group> groups) {
  GroupedDataset d;
  d.groups_ = std::move(groups);
  d.validate();
  return d;
}

void GroupedDataset::validate() {
  if (groups_.empty()) {
    throw InvalidArgument("dataset has no groups");
  }
  p_ = groups_.front().x.cols();
  q_ = groups_.front().z.cols();
  n_total_ = 0;
  warnings_.clear();
  for (const auto& g : groups_) {
    const Index n = g.y.size();
    if (n < 1) {
      throw InvalidArgument("group '" + g.id + "' has no observations");
    }
    if (g.x.rows() != n || g.z.rows() != n || g.x.cols() != p_ || g.z.cols() != q_) {
      std::ostringstream msg;
      msg << "group '" << g.id << "': y has " << n << " rows, X is " << g.x.rows() << "x"
          << g.x.cols() << ", Z is " << g.z.rows() << "x" << g.z.cols() << " (expected p=" << p_
          << ", q=" << q_ << ")";
      throw DimensionMismatch(msg.str());
    }
    if (!g.y.allFinite() || !g.x.allFinite() || !g.z.allFinite()) {
      throw InvalidArgument("group '" + g.id + "' has non-finite values");
    }
    if (n == 1) {
      warnings_.push_back("group '" + g.id +
                          "' has a single observation; variance components may be weakly identified");
    }
    n_total_ += n;
  }
}

GroupedDataset GroupedDataset::with_random_columns(std::vector<int> columns) const {
  return GroupedDataset(groups_, std::move(columns));
}

GroupedDataset GroupedDataset::without_random_effects() const {
  GroupedDataset d = *this;
  for (auto& g : d.groups_) {
    g.z.setZero();
  }
  return d;
}

Matrix GroupedDataset::stacked_x() const {
  Matrix x(n_total_, p_);
  Index row = 0;
  for (const auto& g : groups_) {
    x.middleRows(row, g.x.rows()) = g.x;
    row += g.x.rows();
  }
  return x;
}

Vector GroupedDataset::stacked_y() const {
  Vector y(n_total_);
  Index row = 0;
  for (const auto& g : groups_) {
    y.segment(row, g.y.size()) = g.y;
    row += g.y.size();
  }
  return y;
}

// -------------------------------------------------------------------------
// CovarianceStructure
// -------------------------------------------------------------------------

const char* to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::IdentityMultiple:
      return "identity";
    case CovarianceKind::Diagonal:
      return "diagonal";
    case CovarianceKind::General:
      return "general";
  }
  return "identity";
}

CovarianceKind covariance_kind_from_string(const std::string& name) {
  if (name == "identity") return CovarianceKind::IdentityMultiple;
  if (name == "diagonal") return CovarianceKind::Diagonal;
  if (name == "general") return CovarianceKind::General;
  throw InvalidArgument("unknown covariance structure '" + name +
                        "' (expected identity, diagonal or general)");
}

Index CovarianceStructure::num_params(CovarianceKind kind, Index q) {
  switch (kind) {
    case CovarianceKind::IdentityMultiple:
      return 1;
    case CovarianceKind::Diagonal:
      return q;
    case CovarianceKind::General:
      return q * (q + 1) / 2;
  }
  return 1;
}

CovarianceStructure::CovarianceStructure(CovarianceKind kind, Index q, Vector theta)
    : kind_(kind), q_(q), theta_(std::move(theta)) {
  if (theta_.size() != num_params(kind, q)) {
    std::ostringstream msg;
    msg << "covariance structure '" << to_string(kind) << "' with q=" << q << " needs "
        << num_params(kind, q) << " parameters, got " << theta_.size();
    throw DimensionMismatch(msg.str());
  }
}

CovarianceStructure CovarianceStructure::scaled_identity(CovarianceKind kind, Index q,
                                                         double variance) {
  const double s = std::sqrt(std::max(variance, 0.0));
  Vector theta = Vector::Zero(num_params(kind, q));
  switch (kind) {
    case CovarianceKind::IdentityMultiple:
      theta(0) = s;
      break;
    case CovarianceKind::Diagonal:
      theta.setConstant(s);
      break;
    case CovarianceKind::General: {
      Index t = 0;
      for (Index i = 0; i < q; ++i) {
        for (Index j = 0; j <= i; ++j, ++t) {
          theta(t) = (i == j) ? s : 0.0;
        }
      }
      break;
    }
  }
  return CovarianceStructure(kind, q, std::move(theta));
}

Matrix CovarianceStructure::factor() const {
  Matrix l = Matrix::Zero(q_, q_);
  switch (kind_) {
    case CovarianceKind::IdentityMultiple:
      l.diagonal().setConstant(theta_(0));
      break;
    case CovarianceKind::Diagonal:
      l.diagonal() = theta_;
      break;
    case CovarianceKind::General: {
      Index t = 0;
      for (Index i = 0; i < q_; ++i) {
        for (Index j = 0; j <= i; ++j) {
          l(i, j) = theta_(t++);
        }
      }
      break;
    }
  }
  return l;
}

Matrix CovarianceStructure::psi() const {
  switch (kind_) {
    case CovarianceKind::IdentityMultiple:
      return Matrix::Identity(q_, q_) * (theta_(0) * theta_(0));
    case CovarianceKind::Diagonal:
      return theta_.array().square().matrix().asDiagonal();
    case CovarianceKind::General: {
      const Matrix l = factor();
      return l * l.transpose();
    }
  }
  return Matrix();
}

Matrix CovarianceStructure::psi_derivative(Index j) const {
  Matrix d = Matrix::Zero(q_, q_);
  switch (kind_) {
    case CovarianceKind::IdentityMultiple:
      d.diagonal().setConstant(2.0 * theta_(0));
      break;
    case CovarianceKind::Diagonal:
      d(j, j) = 2.0 * theta_(j);
      break;
    case CovarianceKind::General: {
      // theta_j = L(a, b); dPsi = e_a L(:, b)^T + L(:, b) e_a^T.
      Index a = 0;
      Index t = j;
      while (t > a) {
        t -= a + 1;
        ++a;
      }
      const Index b = t;
      const Vector lb = factor().col(b);
      d.row(a) += lb.transpose();
      d.col(a) += lb;
      break;
    }
  }
  return d;
}

// -------------------------------------------------------------------------
// ParameterVector / PenaltyWeights
// -------------------------------------------------------------------------

double ParameterVector::sigma2() const { return std::exp(rho); }

double ParameterVector::coordinate(Index j) const {
  if (j < beta.size()) return beta(j);
  j -= beta.size();
  if (j < cov.num_params()) return cov.theta()(j);
  return rho;
}

void ParameterVector::set_coordinate(Index j, double value) {
  if (j < beta.size()) {
    beta(j) = value;
    return;
  }
  j -= beta.size();
  if (j < cov.num_params()) {
    cov.set_theta(j, value);
    return;
  }
  rho = value;
}

PenaltyWeights::PenaltyWeights(Vector weights) : w_(std::move(weights)) {
  for (Index k = 0; k < w_.size(); ++k) {
    if (std::isnan(w_(k)) || w_(k) < 0.0) {
      throw InvalidArgument("penalty weights must lie in [0, inf]");
    }
  }
}

PenaltyWeights PenaltyWeights::defaults(const GroupedDataset& data) {
  std::vector<int> unpen{0};
  unpen.insert(unpen.end(), data.random_effect_columns().begin(),
               data.random_effect_columns().end());
  return with_unpenalized(data.p(), unpen);
}

PenaltyWeights PenaltyWeights::with_unpenalized(Index p, std::span<const int> unpenalized) {
  Vector w = Vector::Ones(p);
  for (int k : unpenalized) {
    if (k >= 0 && k < p) w(k) = 0.0;
  }
  return PenaltyWeights(std::move(w));
}

Index PenaltyWeights::num_penalized() const {
  Index n = 0;
  for (Index k = 0; k < w_.size(); ++k) n += penalized(k) ? 1 : 0;
  return n;
}

double PenaltyWeights::penalty(const Vector& beta) const {
  if (beta.size() != w_.size()) {
    throw DimensionMismatch("penalty weights and coefficients differ in length");
  }
  double s = 0.0;
  for (Index k = 0; k < w_.size(); ++k) {
    if (frozen(k)) {
      if (beta(k) != 0.0) {
        throw InfeasibleFrozenCoefficient("coefficient " + std::to_string(k) +
                                          " has infinite weight but is nonzero");
      }
      continue;
    }
    s += w_(k) * std::abs(beta(k));
  }
  return s;
}

// -------------------------------------------------------------------------
// Free functions
// -------------------------------------------------------------------------

Matrix marginal_covariance(const Matrix& z, const CovarianceStructure& cov, double sigma2) {
  if (z.cols() != cov.q()) {
    throw DimensionMismatch("Z has " + std::to_string(z.cols()) + " columns but Psi is " +
                            std::to_string(cov.q()) + "x" + std::to_string(cov.q()));
  }
  Matrix v;
  if (cov.q() == 0) {
    v = Matrix::Zero(z.rows(), z.rows());
  } else {
    const Matrix zl = z * cov.factor();
    v = zl * zl.transpose();
  }
  v.diagonal().array() += sigma2;
  return v;
}

CholeskyFactor group_covariance(const Matrix& z, const ParameterVector& phi) {
  return cholesky(marginal_covariance(z, phi.cov, phi.sigma2()));
}

double neg_log_likelihood(const GroupedDataset& data, const ParameterVector& phi) {
  return MarginalState(data, phi).neg_log_likelihood();
}

double objective(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                 const PenaltyWeights& w) {
  if (!(lambda >= 0.0)) {
    throw InvalidArgument("lambda must be nonnegative");
  }
  const double pen = w.penalty(phi.beta);
  return MarginalState(data, phi).smooth() + (pen == 0.0 ? 0.0 : lambda * pen);
}

double gradient_beta(const GroupedDataset& data, const ParameterVector& phi, Index k) {
  return MarginalState(data, phi).gradient_beta(k);
}

double gradient_eta(const GroupedDataset& data, const ParameterVector& phi, Index r) {
  return MarginalState(data, phi).gradient_eta(r);
}

double fisher_diagonal(const GroupedDataset& data, const ParameterVector& phi, Index j) {
  MarginalState state(data, phi);
  if (j < phi.p()) return state.fisher_beta(j);
  return state.fisher_eta(j - phi.p());
}

// -------------------------------------------------------------------------
// MarginalState
// -------------------------------------------------------------------------

MarginalState::MarginalState(const GroupedDataset& data, const ParameterVector& phi)
    : data_(&data), phi_(phi) {
  if (phi.beta.size() != data.p()) {
    throw DimensionMismatch("beta has length " + std::to_string(phi.beta.size()) +
                            " but the design has p=" + std::to_string(data.p()));
  }
  if (phi.cov.q() != data.q()) {
    throw DimensionMismatch("Psi dimension " + std::to_string(phi.cov.q()) +
                            " does not match q=" + std::to_string(data.q()));
  }
  factorize();
  refresh_residuals();
}

void MarginalState::factorize() {
  const auto& groups = data_->groups();
  const std::size_t n_groups = groups.size();
  factors_.resize(n_groups);
  vinv_.resize(n_groups);
  ztvz_.resize(n_groups);
  log_det_ = 0.0;
  max_jitter_ = 0.0;
  const double s2 = phi_.sigma2();
  for (std::size_t i = 0; i < n_groups; ++i) {
    const auto& g = groups[i];
    factors_[i] = cholesky(marginal_covariance(g.z, phi_.cov, s2));
    vinv_[i] = factors_[i].inverse();
    ztvz_[i] = g.z.transpose() * vinv_[i] * g.z;
    log_det_ += factors_[i].log_det();
    max_jitter_ = std::max(max_jitter_, factors_[i].jitter_applied());
  }
  vinv_x_valid_ = false;
}

void MarginalState::set_variance(const CovarianceStructure& cov, double rho) {
  phi_.cov = cov;
  phi_.rho = rho;
  factorize();
}

void MarginalState::refresh_residuals() {
  const auto& groups = data_->groups();
  residuals_.resize(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    residuals_[i] = groups[i].y - groups[i].x * phi_.beta;
  }
}

void MarginalState::set_beta(Index k, double value) {
  const double delta = value - phi_.beta(k);
  if (delta == 0.0) return;
  phi_.beta(k) = value;
  const auto& groups = data_->groups();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    residuals_[i].noalias() -= delta * groups[i].x.col(k);
  }
}

double MarginalState::quad_form() const {
  double s = 0.0;
  for (std::size_t i = 0; i < residuals_.size(); ++i) {
    s += factors_[i].solve_lower(residuals_[i]).squaredNorm();
  }
  return s;
}

double MarginalState::neg_log_likelihood() const {
  return 0.5 * (static_cast<double>(data_->n_total()) * std::log(2.0 * std::numbers::pi) +
                log_det_ + quad_form());
}

double MarginalState::smooth_with_variance(const CovarianceStructure& cov, double rho) const {
  const double s2 = std::exp(rho);
  if (!std::isfinite(s2) || !(s2 > 0.0) || !cov.theta().allFinite()) {
    return std::numeric_limits<double>::infinity();
  }
  const auto& groups = data_->groups();
  double total = 0.0;
  try {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const CholeskyFactor f = cholesky(marginal_covariance(groups[i].z, cov, s2));
      total += f.log_det() + f.solve_lower(residuals_[i]).squaredNorm();
    }
  } catch (const NotPositiveDefinite&) {
    return std::numeric_limits<double>::infinity();
  }
  return std::isfinite(total) ? 0.5 * total : std::numeric_limits<double>::infinity();
}

void MarginalState::ensure_vinv_x() const {
  if (vinv_x_valid_) return;
  const auto& groups = data_->groups();
  vinv_x_.resize(groups.size());
  x_vinv_x_diag_ = Vector::Zero(data_->p());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    vinv_x_[i].noalias() = vinv_[i] * groups[i].x;
    x_vinv_x_diag_ += groups[i].x.cwiseProduct(vinv_x_[i]).colwise().sum().transpose();
  }
  vinv_x_valid_ = true;
}

Vector MarginalState::vinv_residual(std::size_t i) const { return vinv_[i] * residuals_[i]; }

double MarginalState::gradient_beta(Index k) const {
  ensure_vinv_x();
  double s = 0.0;
  for (std::size_t i = 0; i < residuals_.size(); ++i) {
    s += vinv_x_[i].col(k).dot(residuals_[i]);
  }
  return -s;
}

double MarginalState::fisher_beta(Index k) const {
  ensure_vinv_x();
  return x_vinv_x_diag_(k);
}

double MarginalState::gradient_eta(Index r) const {
  const Index n_theta = phi_.cov.num_params();
  const auto& groups = data_->groups();
  double s = 0.0;
  if (r < n_theta) {
    const Matrix dpsi = phi_.cov.psi_derivative(r);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const Vector c = groups[i].z.transpose() * vinv_residual(i);
      s += (dpsi.cwiseProduct(ztvz_[i])).sum() - c.dot(dpsi * c);
    }
    return 0.5 * s;
  }
  const double s2 = phi_.sigma2();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    s += vinv_[i].trace() - vinv_residual(i).squaredNorm();
  }
  return 0.5 * s2 * s;
}

double MarginalState::fisher_eta(Index r) const {
  const Index n_theta = phi_.cov.num_params();
  double s = 0.0;
  if (r < n_theta) {
    const Matrix dpsi = phi_.cov.psi_derivative(r);
    for (std::size_t i = 0; i < ztvz_.size(); ++i) {
      const Matrix m = dpsi * ztvz_[i];
      s += (m.cwiseProduct(m.transpose())).sum();
    }
    return 0.5 * s;
  }
  const double s2 = phi_.sigma2();
  for (const auto& vi : vinv_) {
    s += vi.squaredNorm();
  }
  return 0.5 * s2 * s2 * s;
}

}  // namespace penlmm
