#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "penlmm/error.hpp"
#include "penlmm/selection.hpp"
#include "penlmm/simulate.hpp"

using namespace penlmm;

namespace {

// Sparse signal plus a random intercept per group.
GroupedDataset signal_data(std::uint64_t seed, int groups, int n, int p, double signal) {
  std::mt19937_64 gen(seed);
  std::vector<Group> gs;
  for (int i = 0; i < groups; ++i) {
    Group g;
    g.id = "g" + std::to_string(i);
    g.x.resize(n, p);
    g.y.resize(n);
    const double b = 0.7 * oracle::normal(gen);
    for (int r = 0; r < n; ++r) {
      g.x(r, 0) = 1.0;
      for (int c = 1; c < p; ++c) g.x(r, c) = oracle::normal(gen);
      g.y(r) = 1.0 + signal * (2.0 * g.x(r, 1) - 1.5 * g.x(r, 2)) + b + 0.5 * oracle::normal(gen);
    }
    gs.push_back(std::move(g));
  }
  return GroupedDataset(std::move(gs), {0});
}

}  // namespace

TEST_CASE("BIC counts active coefficients and free variance parameters") {
  CHECK(bic(100.0, 150, 5, 1) == doctest::Approx(100.0 + std::log(150.0) * 6.0));
  FitResult f;
  f.neg_loglik = 40.0;
  f.active_set = {0, 2, 4};
  f.phi_hat.cov = CovarianceStructure::scaled_identity(CovarianceKind::Diagonal, 3, 1.0);
  const GroupedDataset d = signal_data(1, 4, 5, 4, 1.0);
  CHECK(bic(f, d) == doctest::Approx(80.0 + std::log(20.0) * 6.0));
  f.variance_frozen = true;
  CHECK(bic(f, d) == doctest::Approx(80.0 + std::log(20.0) * 3.0));
}

TEST_CASE("plain lasso coordinate descent agrees with the reference solver") {
  std::mt19937_64 gen(9);
  Matrix x(40, 8);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = oracle::normal(gen);
  }
  Vector y = x.col(1) * 2.0 - x.col(4) + Vector::NullaryExpr(40, [&] { return oracle::normal(gen); });
  Vector wv = Vector::Ones(8);
  wv(0) = 0.0;
  const PenaltyWeights w(wv);
  std::vector<double> pen(8, 1.0);
  pen[0] = 0.0;
  for (double lambda : {0.5, 5.0, 20.0}) {
    const Vector b = lasso_coordinate_descent(x, y, w, lambda, Vector::Zero(8), 1e-14);
    CHECK((b - oracle::reference_lasso(x, y, pen, lambda)).cwiseAbs().maxCoeff() < 1e-8);
  }
  const double top = lasso_lambda_max(x, y, w);
  const Vector at_top = lasso_coordinate_descent(x, y, w, top * 1.0001, Vector::Zero(8));
  for (Index k = 1; k < 8; ++k) CHECK(at_top(k) == 0.0);
}

TEST_CASE("cross-validated lasso uses a 20-point grid starting at the null model") {
  const GroupedDataset d = signal_data(2, 10, 6, 12, 1.0);
  const PenaltyWeights w = PenaltyWeights::defaults(d);
  const LassoCvResult cv = lasso_cv(d, w, 5);
  CHECK(cv.grid.size() == 20);
  CHECK(cv.cv_error.size() == 20);
  for (std::size_t j = 1; j < cv.grid.size(); ++j) CHECK(cv.grid[j] < cv.grid[j - 1]);
  const Vector top = lasso_coordinate_descent(d.stacked_x(), d.stacked_y(), w, cv.grid[0],
                                              Vector::Zero(d.p()));
  for (Index k = 1; k < d.p(); ++k) CHECK(top(k) == 0.0);
  CHECK(cv.beta(1) > 1.0);
  CHECK(cv.beta(2) < -0.5);
}

TEST_CASE("adaptive weights invert the initial coefficients") {
  Vector beta(5);
  beta << 3.0, -0.5, 0.0, 2.0, 1.0;
  Vector base_w = Vector::Ones(5);
  base_w(0) = 0.0;
  base_w(4) = std::numeric_limits<double>::infinity();
  const PenaltyWeights w = adaptive_weights(beta, PenaltyWeights(base_w));
  CHECK(w.unpenalized(0));
  CHECK(w[1] == doctest::Approx(2.0));
  CHECK(w.frozen(2));
  CHECK(w[3] == doctest::Approx(0.5));
  CHECK(w.frozen(4));
}

TEST_CASE("initial values split residual variance into within and between parts") {
  const GroupedDataset d = signal_data(3, 30, 8, 4, 1.0);
  Vector beta = Vector::Zero(4);
  beta << 1.0, 2.0, -1.5, 0.0;
  const InitialValues iv = initial_values(d, CovarianceKind::IdentityMultiple, beta);
  // True values: sigma^2 = 0.25, Psi = 0.49.
  CHECK(std::exp(iv.rho) == doctest::Approx(0.25).epsilon(0.35));
  CHECK(iv.cov.psi()(0, 0) == doctest::Approx(0.49).epsilon(0.6));
  CHECK_THROWS_AS(initial_values(d, CovarianceKind::IdentityMultiple, Vector::Zero(3)),
                  DimensionMismatch);
}

TEST_CASE("lambda_max empties the penalized set at the initial variance") {
  const GroupedDataset d = signal_data(4, 8, 6, 10, 1.0);
  const PenaltyWeights w = PenaltyWeights::defaults(d);
  const auto cov = CovarianceStructure::scaled_identity(CovarianceKind::IdentityMultiple, 1, 0.3);
  const double rho = std::log(0.4);
  const double top = lambda_max(d, w, cov, rho);
  SolverOptions frozen;
  frozen.freeze_variance = true;
  ParameterVector phi{Vector::Zero(d.p()), cov, rho};
  const FitResult f = fit(d, 1.01 * top, w, phi, frozen);
  for (Index k : f.active_set) CHECK(w.unpenalized(k));
  CHECK_THROWS_AS(lambda_max(d, PenaltyWeights(Vector::Zero(d.p())), cov, rho),
                  NoPenalizedCoefficients);
}

TEST_CASE("regularization path is decreasing and picks the BIC minimum") {
  const GroupedDataset d = signal_data(5, 12, 6, 15, 1.0);
  const PenaltyWeights w = PenaltyWeights::defaults(d);
  const PathResult path = lambda_path(d, CovarianceKind::IdentityMultiple, w);
  REQUIRE(!path.entries.empty());
  for (std::size_t j = 1; j < path.entries.size(); ++j) {
    CHECK(path.entries[j].lambda < path.entries[j - 1].lambda);
  }
  for (const auto& e : path.entries) {
    CHECK(e.bic >= path.entries[path.best_index].bic);
    CHECK(trace_is_monotone(e.fit.objective_trace));
    CHECK(e.bic == doctest::Approx(bic(e.fit, d)));
  }
  CHECK(path.lambda_opt == path.entries[path.best_index].lambda);
  CHECK(path.best.phi_hat.beta(1) != 0.0);
  CHECK(path.best.phi_hat.beta(2) != 0.0);

  PathOptions two;
  two.grid_size = 2;
  const PathResult short_path = lambda_path(d, CovarianceKind::IdentityMultiple, w, {}, two);
  CHECK(short_path.entries.size() <= 2);
  PathOptions bad;
  bad.grid_size = 1;
  CHECK_THROWS_AS(lambda_path(d, CovarianceKind::IdentityMultiple, w, {}, bad), InvalidArgument);
}

TEST_CASE("pure noise selects close to the null model") {
  const GroupedDataset d = signal_data(6, 12, 6, 15, 0.0);
  const PenaltyWeights w = PenaltyWeights::defaults(d);
  const PathResult path = lambda_path(d, CovarianceKind::IdentityMultiple, w);
  Index penalized_active = 0;
  for (Index k : path.best.active_set) penalized_active += w.penalized(k) ? 1 : 0;
  CHECK(penalized_active <= 1);
}

TEST_CASE("plain lasso path profiles the residual variance") {
  const GroupedDataset d = signal_data(7, 10, 6, 8, 1.0);
  const PenaltyWeights w = PenaltyWeights::defaults(d);
  PathOptions po;
  po.plain_lasso = true;
  const PathResult path = lambda_path(d, CovarianceKind::IdentityMultiple, w, {}, po);
  const FitResult& f = path.best;
  CHECK(f.variance_frozen);
  const double rss = (d.stacked_y() - d.stacked_x() * f.phi_hat.beta).squaredNorm();
  CHECK(f.phi_hat.sigma2() == doctest::Approx(rss / static_cast<double>(d.n_total())));
}

TEST_CASE("candidate filter keeps large variances that do not worsen BIC") {
  const std::vector<int> cands{1, 2, 3, 4};
  const std::vector<double> theta{0.5, 0.01, 0.8, 0.2};
  const std::vector<double> bics{90.0, 80.0, 120.0, 95.0};
  CHECK(filter_candidates(cands, theta, bics, 100.0, 0.05) == std::vector<int>{1, 4});
  CHECK(filter_candidates(cands, theta, bics, 100.0, 0.3) == std::vector<int>{1});
}

TEST_CASE("structure selection recovers a random slope") {
  std::mt19937_64 gen(12);
  std::vector<Group> gs;
  for (int i = 0; i < 25; ++i) {
    Group g;
    g.id = "g" + std::to_string(i);
    g.x.resize(8, 6);
    g.y.resize(8);
    const double b0 = 0.6 * oracle::normal(gen);
    const double b1 = 1.2 * oracle::normal(gen);
    for (int r = 0; r < 8; ++r) {
      g.x(r, 0) = 1.0;
      for (int c = 1; c < 6; ++c) g.x(r, c) = oracle::normal(gen);
      g.y(r) = 1.0 + (2.0 + b1) * g.x(r, 1) - 1.5 * g.x(r, 2) + b0 + 0.5 * oracle::normal(gen);
    }
    gs.push_back(std::move(g));
  }
  const GroupedDataset d(std::move(gs), {0});
  const StructureSelection s = select_random_effects(d, {0});
  CHECK(std::find(s.candidate_set.begin(), s.candidate_set.end(), 1) != s.candidate_set.end());
  CHECK(std::find(s.selected.begin(), s.selected.end(), 1) != s.selected.end());
  CHECK(std::find(s.final_columns.begin(), s.final_columns.end(), 1) != s.final_columns.end());
  CHECK(s.theta_sq_by_candidate.size() == s.candidate_set.size());
  CHECK(s.bic_by_candidate.size() == s.candidate_set.size());
}
