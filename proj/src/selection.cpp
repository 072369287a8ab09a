#include "penlmm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "penlmm/error.hpp"

namespace penlmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kLassoGridSize = 20;
constexpr double kLassoGridRatio = 0.01;

std::vector<double> log_grid(double top, int size, double ratio) {
  std::vector<double> grid(static_cast<std::size_t>(size));
  for (int j = 0; j < size; ++j) {
    grid[static_cast<std::size_t>(j)] =
        top * std::pow(ratio, static_cast<double>(j) / static_cast<double>(size - 1));
  }
  return grid;
}

std::vector<Index> unpenalized_columns(const PenaltyWeights& w) {
  std::vector<Index> cols;
  for (Index k = 0; k < w.size(); ++k) {
    if (w.unpenalized(k)) cols.push_back(k);
  }
  return cols;
}

// -2 loglik of y ~ N(X beta, s2 I).
double gaussian_neg2loglik(double rss, Index n, double s2) {
  const double nt = static_cast<double>(n);
  return nt * std::log(2.0 * std::numbers::pi) + nt * std::log(s2) + rss / s2;
}

Matrix select_rows(const Matrix& a, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = a.row(rows[i]);
  return out;
}

double residual_variance(double rss, Index n) {
  return std::max(rss / static_cast<double>(n), 1e-12);
}

}  // namespace

double bic(double neg2loglik, Index n_total, Index active_size, Index dim_theta) {
  return neg2loglik +
         std::log(static_cast<double>(n_total)) * static_cast<double>(active_size + dim_theta);
}

double bic(const FitResult& fit, const GroupedDataset& data) {
  const Index dim_theta = fit.variance_frozen ? 0 : fit.phi_hat.cov.num_params();
  return bic(2.0 * fit.neg_loglik, data.n_total(), static_cast<Index>(fit.active_set.size()),
             dim_theta);
}

double lambda_max(const GroupedDataset& data, const PenaltyWeights& w,
                  const CovarianceStructure& cov, double rho) {
  if (w.size() != data.p()) {
    throw DimensionMismatch("penalty weights do not match the design");
  }
  if (w.num_penalized() == 0) {
    throw NoPenalizedCoefficients("every coefficient is unpenalized or frozen");
  }
  const std::vector<Index> unpen = unpenalized_columns(w);
  const Index nu = static_cast<Index>(unpen.size());
  ParameterVector phi{Vector::Zero(data.p()), cov, rho};

  std::vector<CholeskyFactor> factors;
  factors.reserve(static_cast<std::size_t>(data.num_groups()));
  Matrix gram = Matrix::Zero(nu, nu);
  Vector rhs = Vector::Zero(nu);
  for (const auto& g : data.groups()) {
    factors.push_back(group_covariance(g.z, phi));
    if (nu == 0) continue;
    Matrix xu(g.x.rows(), nu);
    for (Index c = 0; c < nu; ++c) xu.col(c) = g.x.col(unpen[static_cast<std::size_t>(c)]);
    const Matrix vxu = factors.back().solve(xu);
    gram.noalias() += xu.transpose() * vxu;
    rhs.noalias() += vxu.transpose() * g.y;
  }
  Vector beta_u = Vector::Zero(nu);
  if (nu > 0) beta_u = cholesky(gram).solve(rhs);

  Vector score = Vector::Zero(data.p());
  for (std::size_t i = 0; i < data.groups().size(); ++i) {
    const auto& g = data.groups()[i];
    Vector r = g.y;
    for (Index c = 0; c < nu; ++c) r -= beta_u(c) * g.x.col(unpen[static_cast<std::size_t>(c)]);
    score.noalias() += g.x.transpose() * factors[i].solve(r);
  }
  double top = 0.0;
  for (Index k = 0; k < data.p(); ++k) {
    if (w.penalized(k)) top = std::max(top, std::abs(score(k)) / w[k]);
  }
  return top;
}

InitialValues initial_values(const GroupedDataset& data, CovarianceKind kind,
                             const Vector& beta_lasso) {
  if (beta_lasso.size() != data.p()) {
    throw DimensionMismatch("initial coefficients do not match the design");
  }
  const Index q = data.q();
  // Split the lasso residuals into within-group and between-group parts by a
  // per-group least-squares fit on the random-effect columns.
  double within_ss = 0.0;
  Index within_df = 0;
  std::vector<Vector> coefs;
  Vector inv_gram_diag = Vector::Zero(q);
  if (q > 0) {
    for (const auto& g : data.groups()) {
      if (g.z.rows() <= q) continue;
      const Eigen::ColPivHouseholderQR<Matrix> qr(g.z);
      if (qr.rank() < q) continue;
      const Vector r = g.y - g.x * beta_lasso;
      const Vector c = qr.solve(r);
      within_ss += (r - g.z * c).squaredNorm();
      within_df += g.z.rows() - q;
      coefs.push_back(c);
      inv_gram_diag += (g.z.transpose() * g.z).inverse().diagonal();
    }
  }
  if (coefs.size() < 2 || within_df == 0) {
    const double rss = (data.stacked_y() - data.stacked_x() * beta_lasso).squaredNorm();
    const double s2 = residual_variance(rss, data.n_total());
    return InitialValues{beta_lasso, CovarianceStructure::scaled_identity(kind, q, 0.1 * s2),
                         std::log(s2)};
  }
  const double m = static_cast<double>(coefs.size());
  const double s2 = std::max(within_ss / static_cast<double>(within_df), 1e-12);
  inv_gram_diag /= m;
  Vector mean = Vector::Zero(q);
  for (const auto& c : coefs) mean += c;
  mean /= m;
  Vector spread = Vector::Zero(q);
  for (const auto& c : coefs) spread += (c - mean).cwiseAbs2();
  spread /= m - 1.0;
  // Between-group spread less the part explained by within-group noise.
  Vector var = (spread - s2 * inv_gram_diag).cwiseMax(0.1 * s2);

  CovarianceStructure cov = CovarianceStructure::scaled_identity(kind, q, var.mean());
  if (kind == CovarianceKind::Diagonal) {
    for (Index j = 0; j < q; ++j) cov.set_theta(j, std::sqrt(var(j)));
  } else if (kind == CovarianceKind::General) {
    for (Index j = 0, t = 0; j < q; t += j + 2, ++j) cov.set_theta(t, std::sqrt(var(j)));
  }
  return InitialValues{beta_lasso, std::move(cov), std::log(s2)};
}

void profile_residual_variance(FitResult& fit, const GroupedDataset& masked_data) {
  const double rss =
      (masked_data.stacked_y() - masked_data.stacked_x() * fit.phi_hat.beta).squaredNorm();
  fit.phi_hat.rho = std::log(residual_variance(rss, masked_data.n_total()));
  fit.neg_loglik = neg_log_likelihood(masked_data, fit.phi_hat);
}

PathResult lambda_path(const GroupedDataset& data, CovarianceKind kind, const PenaltyWeights& w,
                       const SolverOptions& opts, const PathOptions& popts,
                       const std::optional<Vector>& beta_lasso) {
  if (popts.grid_size < 2) {
    throw InvalidArgument("grid size must be at least 2");
  }
  if (!(popts.ratio > 0.0 && popts.ratio < 1.0)) {
    throw InvalidArgument("grid ratio must lie in (0, 1)");
  }
  if (w.size() != data.p()) {
    throw DimensionMismatch("penalty weights do not match the design");
  }
  if (w.num_penalized() == 0) {
    throw NoPenalizedCoefficients("every coefficient is unpenalized or frozen");
  }

  SolverOptions o = opts;
  GroupedDataset masked;
  const GroupedDataset* fit_data = &data;
  ParameterVector start;
  start.beta = Vector::Zero(data.p());
  if (popts.plain_lasso) {
    masked = data.without_random_effects();
    fit_data = &masked;
    o.freeze_variance = true;
    start.cov = CovarianceStructure::scaled_identity(kind, data.q(), 0.0);
    start.rho = 0.0;
  } else {
    const Vector beta0 = beta_lasso ? *beta_lasso : initial_lasso(data, w, popts.cv_folds);
    const InitialValues iv = initial_values(data, kind, beta0);
    start.beta = beta0;
    for (Index k = 0; k < data.p(); ++k) {
      if (w.frozen(k)) start.beta(k) = 0.0;
    }
    start.cov = iv.cov;
    start.rho = iv.rho;
  }

  PathResult out;
  out.lambda_max = lambda_max(*fit_data, w, start.cov, start.rho);
  const std::vector<double> grid =
      out.lambda_max > 0.0 ? log_grid(out.lambda_max, popts.grid_size, popts.ratio)
                           : std::vector<double>{0.0};

  // The mixed-model objective is not convex in the variance parameters, and a
  // warm start can stay on the null-model branch (large sigma^2, nothing
  // active) long after a much better solution exists. Each mixed-model point is
  // therefore also fitted from the initial value. With p > N_T the objective is
  // unbounded below as sigma^2 -> 0, so the two stationary points are compared
  // by BIC rather than by objective, and fits with more than N_T active
  // coefficients are discarded.
  const auto too_large = [&](const FitResult& f) {
    return static_cast<Index>(f.active_set.size()) > data.n_total();
  };
  ParameterVector warm = start;
  bool first = true;
  for (double lambda : grid) {
    std::vector<FitResult> fits;
    std::string failure;
    const auto attempt = [&](const ParameterVector& from) {
      try {
        fits.push_back(fit(*fit_data, lambda, w, from, o));
      } catch (const Error& e) {
        failure += std::string(failure.empty() ? "" : "; ") + e.what();
      }
    };
    attempt(warm);
    if (!popts.plain_lasso && !first) attempt(start);
    first = false;
    if (fits.empty()) {
      out.failures.push_back({lambda, failure});
      continue;
    }
    std::optional<FitResult> f;
    double best_bic = kInf;
    for (auto& cand : fits) {
      if (too_large(cand)) continue;
      if (popts.plain_lasso) profile_residual_variance(cand, masked);
      const double b = bic(cand, data);
      if (!f || b < best_bic) {
        best_bic = b;
        f = std::move(cand);
      }
    }
    if (!f) {
      out.stopped_early = true;
      break;
    }
    warm = f->phi_hat;
    if (popts.plain_lasso) {
      // The profiled variance is not a stationary value of the frozen problem.
      warm.rho = start.rho;
    }
    out.entries.push_back({lambda, std::move(*f), best_bic});
  }
  if (out.entries.empty()) {
    throw Error("no point of the regularization path could be fitted");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < out.entries.size(); ++j) {
    if (out.entries[j].bic < out.entries[best].bic) best = j;
  }
  out.best_index = best;
  out.lambda_opt = out.entries[best].lambda;
  out.best = out.entries[best].fit;
  return out;
}

// ---------------------------------------------------------------------------
// Plain lasso
// ---------------------------------------------------------------------------

Vector lasso_coordinate_descent(const Matrix& x, const Vector& y, const PenaltyWeights& w,
                                double lambda, Vector beta, double tol, int max_sweeps) {
  const Index p = x.cols();
  if (w.size() != p || beta.size() != p || y.size() != x.rows()) {
    throw DimensionMismatch("lasso inputs have inconsistent dimensions");
  }
  const Vector col_sq = x.colwise().squaredNorm().transpose();
  for (Index k = 0; k < p; ++k) {
    if (w.frozen(k) || col_sq(k) == 0.0) beta(k) = 0.0;
  }
  Vector r = y - x * beta;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double worst = 0.0;
    for (Index k = 0; k < p; ++k) {
      if (w.frozen(k) || col_sq(k) == 0.0) continue;
      const double old = beta(k);
      const double u = x.col(k).dot(r) + col_sq(k) * old;
      const double t = w.unpenalized(k) ? 0.0 : lambda * w[k];
      double next = 0.0;
      if (u > t) {
        next = (u - t) / col_sq(k);
      } else if (u < -t) {
        next = (u + t) / col_sq(k);
      }
      if (next != old) {
        r.noalias() -= (next - old) * x.col(k);
        beta(k) = next;
        worst = std::max(worst, std::abs(next - old) * std::sqrt(col_sq(k)));
      }
    }
    if (worst < tol * std::max(1.0, y.norm())) break;
  }
  return beta;
}

double lasso_lambda_max(const Matrix& x, const Vector& y, const PenaltyWeights& w) {
  std::vector<Index> unpen = unpenalized_columns(w);
  Vector r = y;
  if (!unpen.empty()) {
    Matrix xu(x.rows(), static_cast<Index>(unpen.size()));
    for (std::size_t c = 0; c < unpen.size(); ++c) xu.col(static_cast<Index>(c)) = x.col(unpen[c]);
    r -= xu * cholesky(xu.transpose() * xu).solve(Vector(xu.transpose() * y));
  }
  double top = 0.0;
  for (Index k = 0; k < x.cols(); ++k) {
    if (w.penalized(k)) top = std::max(top, std::abs(x.col(k).dot(r)) / w[k]);
  }
  return top;
}

LassoCvResult lasso_cv(const GroupedDataset& data, const PenaltyWeights& w, int folds) {
  if (folds < 2) {
    throw InvalidArgument("cross-validation needs at least 2 folds");
  }
  if (data.n_total() < folds) {
    throw InvalidArgument("fewer observations than cross-validation folds");
  }
  if (w.size() != data.p()) {
    throw DimensionMismatch("penalty weights do not match the design");
  }
  const Matrix x = data.stacked_x();
  const Vector y = data.stacked_y();
  const Index n = x.rows();
  const Index p = x.cols();

  LassoCvResult out;
  const double top = w.num_penalized() > 0 ? lasso_lambda_max(x, y, w) : 0.0;
  out.grid = top > 0.0 ? log_grid(top, kLassoGridSize, kLassoGridRatio) : std::vector<double>{0.0};
  out.cv_error.assign(out.grid.size(), 0.0);

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train;
    std::vector<Index> test;
    for (Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
    const Matrix x_tr = select_rows(x, train);
    const Vector y_tr = select_rows(y, train);
    const Matrix x_te = select_rows(x, test);
    const Vector y_te = select_rows(y, test);
    Vector beta = Vector::Zero(p);
    for (std::size_t j = 0; j < out.grid.size(); ++j) {
      beta = lasso_coordinate_descent(x_tr, y_tr, w, out.grid[j], beta);
      out.cv_error[j] += (y_te - x_te * beta).squaredNorm();
    }
  }
  for (double& e : out.cv_error) e /= static_cast<double>(n);

  const auto best = static_cast<std::size_t>(
      std::min_element(out.cv_error.begin(), out.cv_error.end()) - out.cv_error.begin());
  Vector beta = Vector::Zero(p);
  for (std::size_t j = 0; j <= best; ++j) {
    beta = lasso_coordinate_descent(x, y, w, out.grid[j], beta);
  }
  out.beta = beta;
  out.lambda = out.grid[best];
  return out;
}

Vector initial_lasso(const GroupedDataset& data, const PenaltyWeights& w, int folds) {
  return lasso_cv(data, w, folds).beta;
}

PenaltyWeights adaptive_weights(const Vector& beta_init, const PenaltyWeights& base) {
  if (beta_init.size() != base.size()) {
    throw DimensionMismatch("initial coefficients and base weights differ in length");
  }
  Vector w(beta_init.size());
  for (Index k = 0; k < w.size(); ++k) {
    if (base.frozen(k)) {
      w(k) = kInf;
    } else if (base.unpenalized(k)) {
      w(k) = 0.0;
    } else {
      w(k) = beta_init(k) == 0.0 ? kInf : 1.0 / std::abs(beta_init(k));
    }
  }
  return PenaltyWeights(std::move(w));
}

// ---------------------------------------------------------------------------
// Random-effect structure
// ---------------------------------------------------------------------------

std::vector<int> filter_candidates(const std::vector<int>& candidates,
                                   const std::vector<double>& theta_sq,
                                   const std::vector<double>& bics, double bic0, double kappa) {
  if (theta_sq.size() != candidates.size() || bics.size() != candidates.size()) {
    throw DimensionMismatch("candidate summaries differ in length");
  }
  std::vector<int> kept;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (theta_sq[c] > kappa && bics[c] <= bic0) kept.push_back(candidates[c]);
  }
  return kept;
}

StructureSelection select_random_effects(const GroupedDataset& data,
                                         const std::vector<int>& unpenalized, double kappa,
                                         std::size_t max_candidates, const SolverOptions& opts,
                                         const PathOptions& popts) {
  if (!(kappa >= 0.0)) {
    throw InvalidArgument("kappa must be nonnegative");
  }
  for (int k : unpenalized) {
    if (k < 0 || k >= data.p()) {
      throw InvalidArgument("unpenalized column " + std::to_string(k) + " is out of range");
    }
  }
  const PenaltyWeights base = PenaltyWeights::with_unpenalized(data.p(), unpenalized);
  StructureSelection out;
  out.kappa = kappa;

  // (1) Cross-validated lasso ignoring the grouping.
  const LassoCvResult cv = lasso_cv(data, base, popts.cv_folds);
  out.lasso_beta = cv.beta;
  out.lambda_lasso = cv.lambda;
  for (Index k = 0; k < data.p(); ++k) {
    if (cv.beta(k) != 0.0) out.candidate_set.push_back(static_cast<int>(k));
  }
  if (out.candidate_set.empty()) {
    throw EmptyCandidateSet("the cross-validated lasso selected no covariate");
  }
  if (max_candidates > 0 && out.candidate_set.size() > max_candidates) {
    std::stable_sort(out.candidate_set.begin(), out.candidate_set.end(),
                     [&](int a, int b) { return std::abs(cv.beta(a)) > std::abs(cv.beta(b)); });
    out.candidate_set.resize(max_candidates);
    std::sort(out.candidate_set.begin(), out.candidate_set.end());
  }

  const double rss = (data.stacked_y() - data.stacked_x() * cv.beta).squaredNorm();
  const double s2 = residual_variance(rss, data.n_total());
  Index lasso_active = 0;
  for (Index k = 0; k < data.p(); ++k) lasso_active += cv.beta(k) != 0.0 ? 1 : 0;
  out.bic0 = bic(gaussian_neg2loglik(rss, data.n_total(), s2), data.n_total(), lasso_active, 0);

  // (2) One random-effect coefficient at a time. The lasso lambda refers to
  // 1/2 RSS; dividing by sigma^2 puts it on the scale of 1/2 r^T V^{-1} r.
  const double lambda_single = cv.lambda / s2;
  for (int l : out.candidate_set) {
    std::vector<int> unpen = unpenalized;
    unpen.push_back(l);
    const PenaltyWeights w = PenaltyWeights::with_unpenalized(data.p(), unpen);
    const GroupedDataset single = data.with_random_columns({l});
    const InitialValues iv = initial_values(single, CovarianceKind::IdentityMultiple, cv.beta);
    try {
      const FitResult f = fit(single, lambda_single, w, {iv.beta, iv.cov, iv.rho}, opts);
      out.theta_sq_by_candidate.push_back(f.phi_hat.cov.psi()(0, 0));
      out.bic_by_candidate.push_back(bic(f, single));
    } catch (const Error&) {
      out.theta_sq_by_candidate.push_back(std::numeric_limits<double>::quiet_NaN());
      out.bic_by_candidate.push_back(kInf);
    }
  }

  // (3) Variance threshold and BIC filter.
  out.selected = filter_candidates(out.candidate_set, out.theta_sq_by_candidate,
                                   out.bic_by_candidate, out.bic0, kappa);
  if (out.selected.empty()) return out;

  // (4) Joint fit with diagonal Psi over the survivors.
  std::vector<int> unpen = unpenalized;
  unpen.insert(unpen.end(), out.selected.begin(), out.selected.end());
  const PenaltyWeights w = PenaltyWeights::with_unpenalized(data.p(), unpen);
  const GroupedDataset joint = data.with_random_columns(out.selected);
  if (w.num_penalized() > 0) {
    PathOptions po = popts;
    po.plain_lasso = false;
    out.final_fit = lambda_path(joint, CovarianceKind::Diagonal, w, opts, po, cv.beta).best;
  } else {
    const InitialValues iv = initial_values(joint, CovarianceKind::Diagonal, cv.beta);
    out.final_fit = fit(joint, 0.0, w, {iv.beta, iv.cov, iv.rho}, opts);
  }
  const Matrix psi = out.final_fit->phi_hat.cov.psi();
  for (std::size_t c = 0; c < out.selected.size(); ++c) {
    const double v = psi(static_cast<Index>(c), static_cast<Index>(c));
    if (v > kappa) {
      out.final_columns.push_back(out.selected[c]);
      out.final_variances.push_back(v);
    }
  }
  return out;
}

}  // namespace penlmm
