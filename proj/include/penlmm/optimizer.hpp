#pragma once

// Coordinate gradient descent for the penalized mixed-model objective
//
//   Q(phi) = g(phi) + lambda * sum_k w_k |beta_k|.
//
// Each coordinate takes a step along the minimizer of a quadratic model of g
// whose curvature h is the Fisher-information diagonal clamped to
// [c_min, c_max], and the step length comes from Armijo backtracking. For
// fixed-effect coordinates with an untruncated h the quadratic model is exact,
// so the step reduces to the closed-form soft-threshold update.

#include <functional>
#include <span>
#include <vector>

#include "penlmm/model.hpp"

namespace penlmm {

// One coordinate update, reported to SolverOptions::observer.
struct StepRecord {
  Index coordinate = 0;
  double h = 0.0;          // curvature used (after truncation)
  double direction = 0.0;  // d
  double alpha = 0.0;      // accepted step length, 0 when skipped
  bool analytic = false;   // closed-form fixed-effect update
  bool skipped = false;    // zero direction or Armijo exhausted
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct SolverOptions {
  int max_cycles = 500;
  double rel_obj_tol = 1e-6;
  double max_param_tol = 1e-4;
  // Largest stationarity residual (see kkt_residual) accepted at convergence.
  double kkt_tol = 1e-3;
  double c_min = 1e-6;
  double c_max = 1e8;
  double armijo_delta = 0.1;
  double armijo_rho = 0.001;
  double armijo_gamma = 0.0;
  double alpha_init = 1.0;
  int max_armijo_backtracks = 30;
  // Full sweeps every D-th cycle; sweeps in between visit the active set only.
  int active_set_refresh = 5;
  // Keep theta and rho at their initial values (plain lasso baselines).
  bool freeze_variance = false;
  std::function<void(const StepRecord&)> observer;

  void validate() const;
};

struct FitResult {
  ParameterVector phi_hat;
  double lambda = 0.0;
  PenaltyWeights weights;
  std::vector<Index> active_set;
  double objective_value = 0.0;
  double neg_loglik = 0.0;
  int cycles_used = 0;
  bool converged = false;
  // Objective at the start and after every cycle.
  std::vector<double> objective_trace;
  int armijo_failures = 0;
  bool variance_frozen = false;
  double kkt_residual = 0.0;
};

// Minimizer over d of g' d + h d^2 / 2 + lam_w |beta_k + d|.
double descent_direction(double gprime, double h, double beta_k, double lam_w, bool penalized);

struct ArmijoResult {
  double alpha = 0.0;
  ParameterVector phi_next;
  double objective = 0.0;
  int backtracks = 0;
};

// Backtracks alpha over alpha_init * delta^r until
//   Q(phi + alpha d e_coord) <= Q(phi) + alpha * armijo_rho * Delta.
// Returns alpha = 0 and phi unchanged when no step is accepted.
ArmijoResult armijo_step(const GroupedDataset& data, const ParameterVector& phi, Index coord,
                         double d, double h, double lambda, const PenaltyWeights& w,
                         const SolverOptions& opts);

// Exact minimizer of Q over beta_k with all other coordinates fixed.
double analytic_beta_update(const GroupedDataset& data, const ParameterVector& phi, Index k,
                            double lambda, const PenaltyWeights& w);

struct CycleResult {
  ParameterVector phi;
  double max_change = 0.0;
  double objective = 0.0;
  int armijo_failures = 0;
};

// One Gauss-Seidel pass over `coords` in the given order.
CycleResult cgd_cycle(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                      const PenaltyWeights& w, const SolverOptions& opts,
                      std::span<const Index> coords);

FitResult fit(const GroupedDataset& data, double lambda, const PenaltyWeights& w,
              const ParameterVector& phi_init, const SolverOptions& opts = {});

// Largest violation of the first-order conditions at phi: |dg| for unpenalized
// and variance coordinates, the subgradient gap for penalized ones.
double kkt_residual(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                    const PenaltyWeights& w, bool variance_frozen);

// Non-increasing trace within `tol` relative to max(1, |Q|).
bool trace_is_monotone(const std::vector<double>& trace, double tol = 1e-12);

}  // namespace penlmm
