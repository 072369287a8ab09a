#pragma once

// Regularization paths, BIC model choice, starting values and random-effect
// structure selection.

#include <optional>
#include <string>
#include <vector>

#include "penlmm/optimizer.hpp"

namespace penlmm {

// BIC = -2 loglik + log(N_T) * (|S| + dim(theta)). The residual variance is not
// counted in the degrees of freedom.
double bic(double neg2loglik, Index n_total, Index active_size, Index dim_theta);
// For fits with frozen variance parameters dim(theta) is taken as 0.
double bic(const FitResult& fit, const GroupedDataset& data);

// Smallest lambda at which every penalized coefficient is zero, given the
// variance parameters: max_k |x_k^T V^{-1} (y - X_u beta_u)| / w_k with beta_u the
// GLS fit on the unpenalized columns.
double lambda_max(const GroupedDataset& data, const PenaltyWeights& w,
                  const CovarianceStructure& cov, double rho);

struct PathOptions {
  int grid_size = 30;
  double ratio = 0.01;
  // Fit a plain linear-model lasso: random effects masked out, sigma^2 frozen at 1
  // during the fit and profiled afterwards.
  bool plain_lasso = false;
  int cv_folds = 10;
};

struct PathEntry {
  double lambda = 0.0;
  FitResult fit;
  double bic = 0.0;
};

struct PathFailure {
  double lambda = 0.0;
  std::string message;
};

struct PathResult {
  std::vector<PathEntry> entries;
  std::vector<PathFailure> failures;
  double lambda_max = 0.0;
  double lambda_opt = 0.0;
  std::size_t best_index = 0;
  FitResult best;
  bool stopped_early = false;  // |S| exceeded N_T
};

struct InitialValues {
  Vector beta;
  CovarianceStructure cov;
  double rho = 0.0;
};

// Starting values from the lasso residuals: each group's residuals are
// regressed on its random-effect columns; sigma0^2 is the pooled within-group
// residual variance and Psi0 is diagonal with the between-group spread of the
// per-group coefficients, corrected for noise and floored at 0.1 sigma0^2.
// Falls back to sigma0^2 = RSS / N_T and Psi0 = 0.1 sigma0^2 I when fewer than
// two groups have more observations than random effects.
InitialValues initial_values(const GroupedDataset& data, CovarianceKind kind,
                             const Vector& beta_lasso);

PathResult lambda_path(const GroupedDataset& data, CovarianceKind kind, const PenaltyWeights& w,
                       const SolverOptions& opts = {}, const PathOptions& popts = {},
                       const std::optional<Vector>& beta_lasso = std::nullopt);

// Plain lasso (V = I) on the stacked data, lambda chosen by `folds`-fold
// cross-validation over a 20-point log grid. Folds are assigned by observation
// index modulo `folds`, ignoring the grouping.
struct LassoCvResult {
  Vector beta;
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_error;
};
LassoCvResult lasso_cv(const GroupedDataset& data, const PenaltyWeights& w, int folds = 10);
Vector initial_lasso(const GroupedDataset& data, const PenaltyWeights& w, int folds = 10);

// Coordinate descent for 1/2 |y - X beta|^2 + lambda sum_k w_k |beta_k|.
Vector lasso_coordinate_descent(const Matrix& x, const Vector& y, const PenaltyWeights& w,
                                double lambda, Vector beta_start, double tol = 1e-10,
                                int max_sweeps = 10000);
double lasso_lambda_max(const Matrix& x, const Vector& y, const PenaltyWeights& w);

// w_k = 1 / |beta_init_k|, +inf where beta_init_k = 0; coefficients unpenalized in
// `base` stay unpenalized and frozen ones stay frozen.
PenaltyWeights adaptive_weights(const Vector& beta_init, const PenaltyWeights& base);

// Refit sigma^2 = RSS / N_T for a plain-lasso fit and recompute its likelihood.
void profile_residual_variance(FitResult& fit, const GroupedDataset& masked_data);

struct StructureSelection {
  std::vector<int> candidate_set;
  std::vector<double> theta_sq_by_candidate;
  std::vector<double> bic_by_candidate;
  double bic0 = 0.0;
  double lambda_lasso = 0.0;
  double kappa = 0.05;
  std::vector<int> selected;  // R_kappa
  // Columns kept after the joint diagonal fit, with their variances.
  std::vector<int> final_columns;
  std::vector<double> final_variances;
  std::optional<FitResult> final_fit;
  Vector lasso_beta;
};

// R_kappa = {l : theta_l^2 > kappa and BIC_l <= BIC_0}, in candidate order.
std::vector<int> filter_candidates(const std::vector<int>& candidates,
                                   const std::vector<double>& theta_sq,
                                   const std::vector<double>& bics, double bic0, double kappa);

// Four steps: CV lasso for candidates; one random-effect fit per candidate;
// threshold + BIC filter; joint diagonal-Psi fit over the survivors.
// `unpenalized` lists the columns never penalized (typically the intercept).
StructureSelection select_random_effects(const GroupedDataset& data,
                                         const std::vector<int>& unpenalized, double kappa = 0.05,
                                         std::size_t max_candidates = 0,
                                         const SolverOptions& opts = {},
                                         const PathOptions& popts = {});

}  // namespace penlmm
