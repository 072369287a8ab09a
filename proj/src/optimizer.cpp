#include "penlmm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "penlmm/error.hpp"

namespace penlmm {

void SolverOptions::validate() const {
  if (!(c_min > 0.0 && c_min <= c_max)) {
    throw InvalidArgument("solver options: need 0 < c_min <= c_max");
  }
  if (!(armijo_delta > 0.0 && armijo_delta < 1.0)) {
    throw InvalidArgument("solver options: armijo_delta must lie in (0, 1)");
  }
  if (!(armijo_rho > 0.0 && armijo_rho < 0.5)) {
    throw InvalidArgument("solver options: armijo_rho must lie in (0, 1/2)");
  }
  if (!(alpha_init > 0.0)) {
    throw InvalidArgument("solver options: alpha_init must be positive");
  }
  if (max_cycles < 1 || active_set_refresh < 1 || max_armijo_backtracks < 0) {
    throw InvalidArgument("solver options: cycle counts must be positive");
  }
}

double descent_direction(double gprime, double h, double beta_k, double lam_w, bool penalized) {
  if (!penalized) {
    return -gprime / h;
  }
  const double a = (lam_w - gprime) / h;
  const double b = -beta_k;
  const double c = (-lam_w - gprime) / h;
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

namespace {

double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

double clamp_h(double raw, const SolverOptions& opts) {
  return std::min(std::max(raw, opts.c_min), opts.c_max);
}

// Mutable solver state for one (data, lambda, w). Tracks the smooth part g
// incrementally across fixed-effect updates; callers resync with resync().
class CoordinateSolver {
 public:
  CoordinateSolver(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                   const PenaltyWeights& w, const SolverOptions& opts)
      : state_(data, phi), lambda_(lambda), w_(w), opts_(opts) {
    if (w.size() != data.p()) {
      throw DimensionMismatch("penalty weights have length " + std::to_string(w.size()) +
                              " but p=" + std::to_string(data.p()));
    }
    if (!(lambda >= 0.0)) {
      throw InvalidArgument("lambda must be nonnegative");
    }
    penalty_ = w.penalty(phi.beta);
    g_ = state_.smooth();
  }

  const ParameterVector& phi() const { return state_.phi(); }
  const MarginalState& state() const { return state_; }
  double objective() const { return g_ + penalty_term(); }
  int armijo_failures() const { return armijo_failures_; }

  void resync() {
    state_.refresh_residuals();
    g_ = state_.smooth();
    penalty_ = w_.penalty(state_.phi().beta);
  }

  // Returns |change| of the coordinate.
  double update(Index j) {
    if (state_.phi().is_beta(j)) {
      return update_beta(j);
    }
    return update_variance(j);
  }

  ArmijoResult armijo(Index j, double d, double h) {
    ArmijoResult out;
    out.alpha = line_search(j, d, h, out.backtracks);
    out.phi_next = state_.phi();
    out.objective = objective();
    return out;
  }

 private:
  double penalty_term() const { return penalty_ == 0.0 ? 0.0 : lambda_ * penalty_; }

  double update_beta(Index k) {
    if (w_.frozen(k)) return 0.0;
    const double beta = state_.phi().beta(k);
    const double gprime = state_.gradient_beta(k);
    const double h_raw = state_.fisher_beta(k);
    const double h = clamp_h(h_raw, opts_);
    const double lam_w = w_.unpenalized(k) ? 0.0 : lambda_ * w_[k];
    const double q_before = objective();

    StepRecord rec;
    rec.coordinate = k;
    rec.h = h;
    rec.objective_before = q_before;

    if (h_raw > opts_.c_min && h_raw < opts_.c_max) {
      const double u = h_raw * beta - gprime;
      const double next = soft_threshold(u, lam_w) / h_raw;
      const double delta = next - beta;
      rec.analytic = true;
      rec.direction = delta;
      rec.alpha = 1.0;
      if (delta != 0.0) {
        g_ += delta * gprime + 0.5 * delta * delta * h_raw;
        penalty_ += w_.unpenalized(k) ? 0.0 : w_[k] * (std::abs(next) - std::abs(beta));
        state_.set_beta(k, next);
      } else {
        rec.skipped = true;
        rec.alpha = 0.0;
      }
      rec.objective_after = objective();
      notify(rec);
      return std::abs(delta);
    }

    const double d = descent_direction(gprime, h, beta, lam_w, w_.penalized(k));
    rec.direction = d;
    if (d == 0.0 || !std::isfinite(d)) {
      rec.skipped = true;
      rec.objective_after = q_before;
      notify(rec);
      return 0.0;
    }
    int backtracks = 0;
    rec.alpha = line_search(k, d, h, backtracks);
    rec.skipped = rec.alpha == 0.0;
    rec.objective_after = objective();
    notify(rec);
    return std::abs(state_.phi().beta(k) - beta);
  }

  double update_variance(Index j) {
    const Index r = j - state_.phi().p();
    const double gprime = state_.gradient_eta(r);
    const double h = clamp_h(state_.fisher_eta(r), opts_);
    const double d = -gprime / h;
    const double before = state_.phi().coordinate(j);

    StepRecord rec;
    rec.coordinate = j;
    rec.h = h;
    rec.direction = d;
    rec.objective_before = objective();
    if (d == 0.0 || !std::isfinite(d)) {
      rec.skipped = true;
      rec.objective_after = rec.objective_before;
      notify(rec);
      return 0.0;
    }
    int backtracks = 0;
    rec.alpha = line_search(j, d, h, backtracks);
    rec.skipped = rec.alpha == 0.0;
    rec.objective_after = objective();
    notify(rec);
    return std::abs(state_.phi().coordinate(j) - before);
  }

  // Armijo backtracking along d e_j. Applies the accepted step and returns
  // alpha, or 0 when every trial fails.
  double line_search(Index j, double d, double h, int& backtracks) {
    const ParameterVector& phi = state_.phi();
    const bool is_beta = phi.is_beta(j);
    const double x0 = phi.coordinate(j);
    double gprime = 0.0;
    double h_true = 0.0;
    double lam_w = 0.0;
    if (is_beta) {
      gprime = state_.gradient_beta(j);
      h_true = state_.fisher_beta(j);
      lam_w = w_.unpenalized(j) ? 0.0 : lambda_ * w_[j];
    } else {
      gprime = state_.gradient_eta(j - phi.p());
    }
    const double pen_step = is_beta ? lam_w * (std::abs(x0 + d) - std::abs(x0)) : 0.0;
    const double delta = gprime * d + opts_.armijo_gamma * d * d * h + pen_step;
    if (!(delta < 0.0)) {
      throw NonDescentDirection("coordinate " + std::to_string(j) +
                                ": Armijo Delta is not negative");
    }

    const double q0 = objective();
    double alpha = opts_.alpha_init;
    for (backtracks = 0; backtracks <= opts_.max_armijo_backtracks; ++backtracks) {
      const double step = alpha * d;
      const double x1 = x0 + step;
      if (is_beta) {
        // g is quadratic in beta_j, so the trial value is exact.
        const double dg = step * gprime + 0.5 * step * step * h_true;
        const double dpen = lam_w * (std::abs(x1) - std::abs(x0));
        if (dg + dpen <= alpha * opts_.armijo_rho * delta) {
          g_ += dg;
          if (!w_.unpenalized(j)) penalty_ += w_[j] * (std::abs(x1) - std::abs(x0));
          state_.set_beta(j, x1);
          return alpha;
        }
      } else {
        ParameterVector trial = phi;
        trial.set_coordinate(j, x1);
        const double g1 = state_.smooth_with_variance(trial.cov, trial.rho);
        if (std::isfinite(g1) && g1 + penalty_term() <= q0 + alpha * opts_.armijo_rho * delta) {
          state_.set_variance(trial.cov, trial.rho);
          g_ = g1;
          return alpha;
        }
      }
      alpha *= opts_.armijo_delta;
    }
    ++armijo_failures_;
    return 0.0;
  }

  void notify(const StepRecord& rec) const {
    if (opts_.observer) opts_.observer(rec);
  }

  MarginalState state_;
  double lambda_;
  const PenaltyWeights& w_;
  const SolverOptions& opts_;
  double g_ = 0.0;
  double penalty_ = 0.0;
  int armijo_failures_ = 0;
};

std::vector<Index> sweep_coordinates(const ParameterVector& phi, const PenaltyWeights& w,
                                     bool full, bool freeze_variance) {
  std::vector<Index> coords;
  for (Index k = 0; k < phi.p(); ++k) {
    if (w.frozen(k)) continue;
    if (full || w.unpenalized(k) || phi.beta(k) != 0.0) coords.push_back(k);
  }
  if (!freeze_variance) {
    for (Index j = phi.p(); j < phi.size(); ++j) coords.push_back(j);
  }
  return coords;
}

double kkt_from_state(const MarginalState& state, double lambda, const PenaltyWeights& w,
                      bool variance_frozen) {
  const ParameterVector& phi = state.phi();
  double worst = 0.0;
  for (Index k = 0; k < phi.p(); ++k) {
    if (w.frozen(k)) continue;
    const double g = state.gradient_beta(k);
    double v = 0.0;
    if (w.unpenalized(k)) {
      v = std::abs(g);
    } else {
      const double lw = lambda * w[k];
      const double b = phi.beta(k);
      v = b == 0.0 ? std::max(0.0, std::abs(g) - lw) : std::abs(g + lw * (b > 0.0 ? 1.0 : -1.0));
    }
    worst = std::max(worst, v);
  }
  if (!variance_frozen) {
    for (Index r = 0; r < phi.cov.num_params() + 1; ++r) {
      worst = std::max(worst, std::abs(state.gradient_eta(r)));
    }
  }
  return worst;
}

}  // namespace

ArmijoResult armijo_step(const GroupedDataset& data, const ParameterVector& phi, Index coord,
                         double d, double h, double lambda, const PenaltyWeights& w,
                         const SolverOptions& opts) {
  opts.validate();
  if (coord < 0 || coord >= phi.size()) {
    throw InvalidArgument("coordinate index out of range");
  }
  CoordinateSolver solver(data, phi, lambda, w, opts);
  return solver.armijo(coord, d, h);
}

double analytic_beta_update(const GroupedDataset& data, const ParameterVector& phi, Index k,
                            double lambda, const PenaltyWeights& w) {
  if (w.frozen(k)) {
    throw InvalidArgument("analytic update requested for a frozen coefficient");
  }
  MarginalState state(data, phi);
  ParameterVector without = phi;
  without.beta(k) = 0.0;
  MarginalState partial(data, without);
  // u = (y - X_{-k} beta_{-k})^T V^{-1} x_k = -dg/dbeta_k evaluated at beta_k = 0.
  const double u = -partial.gradient_beta(k);
  const double h = state.fisher_beta(k);
  const double lam_w = w.unpenalized(k) ? 0.0 : lambda * w[k];
  return soft_threshold(u, lam_w) / h;
}

CycleResult cgd_cycle(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                      const PenaltyWeights& w, const SolverOptions& opts,
                      std::span<const Index> coords) {
  opts.validate();
  CoordinateSolver solver(data, phi, lambda, w, opts);
  CycleResult out;
  for (Index j : coords) {
    if (j < 0 || j >= phi.size()) {
      throw InvalidArgument("coordinate index out of range");
    }
    if (opts.freeze_variance && !phi.is_beta(j)) continue;
    out.max_change = std::max(out.max_change, solver.update(j));
  }
  solver.resync();
  out.phi = solver.phi();
  out.objective = solver.objective();
  out.armijo_failures = solver.armijo_failures();
  return out;
}

FitResult fit(const GroupedDataset& data, double lambda, const PenaltyWeights& w,
              const ParameterVector& phi_init, const SolverOptions& opts) {
  opts.validate();
  CoordinateSolver solver(data, phi_init, lambda, w, opts);

  FitResult result;
  result.lambda = lambda;
  result.weights = w;
  result.variance_frozen = opts.freeze_variance;
  result.objective_trace.push_back(solver.objective());

  double prev = solver.objective();
  bool need_full = false;
  for (int cycle = 0; cycle < opts.max_cycles; ++cycle) {
    const bool full = need_full || cycle % opts.active_set_refresh == 0;
    const auto coords = sweep_coordinates(solver.phi(), w, full, opts.freeze_variance);
    double max_change = 0.0;
    for (Index j : coords) {
      max_change = std::max(max_change, solver.update(j));
    }
    solver.resync();
    const double q = solver.objective();
    result.objective_trace.push_back(q);
    result.cycles_used = cycle + 1;

    const double rel = std::abs(prev - q) / std::max(1.0, std::abs(q));
    prev = q;
    const bool small = rel < opts.rel_obj_tol && max_change < opts.max_param_tol;
    if (!small) {
      need_full = false;
      continue;
    }
    if (!full) {
      need_full = true;
      continue;
    }
    need_full = false;
    result.kkt_residual = kkt_from_state(solver.state(), lambda, w, opts.freeze_variance);
    if (result.kkt_residual <= opts.kkt_tol) {
      result.converged = true;
      break;
    }
  }

  result.phi_hat = solver.phi();
  if (!result.converged) {
    result.kkt_residual = kkt_from_state(solver.state(), lambda, w, opts.freeze_variance);
  }
  result.objective_value = solver.objective();
  result.neg_loglik = solver.state().neg_log_likelihood();
  result.armijo_failures = solver.armijo_failures();
  for (Index k = 0; k < result.phi_hat.p(); ++k) {
    if (result.phi_hat.beta(k) != 0.0) result.active_set.push_back(k);
  }
  return result;
}

double kkt_residual(const GroupedDataset& data, const ParameterVector& phi, double lambda,
                    const PenaltyWeights& w, bool variance_frozen) {
  return kkt_from_state(MarginalState(data, phi), lambda, w, variance_frozen);
}

bool trace_is_monotone(const std::vector<double>& trace, double tol) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] > trace[i - 1] + tol * std::max(1.0, std::abs(trace[i - 1]))) return false;
  }
  return true;
}

}  // namespace penlmm
