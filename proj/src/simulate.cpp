#include "penlmm/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "penlmm/error.hpp"

namespace penlmm {

void SimScheme::validate() const {
  auto fail = [&](const std::string& why) {
    throw InvalidArgument("scheme '" + name + "': " + why);
  };
  if (N < 1 || n < 1) fail("need at least one group and one observation per group");
  if (p < 1 || q < 0 || q > p) fail("need 0 <= q <= p and p >= 1");
  if (fit_q < 1 || fit_q > p) fail("fitted random-effect dimension must lie in [1, p]");
  if (beta0.size() != p) fail("beta0 must have length p");
  if (psi0.rows() != q || psi0.cols() != q) fail("psi0 must be q x q");
  if (q > 0) {
    if ((psi0 - psi0.transpose()).cwiseAbs().maxCoeff() > 1e-12) fail("psi0 must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(psi0);
    if (es.eigenvalues().minCoeff() < -1e-12) fail("psi0 must be positive semidefinite");
  }
  if (!(sigma2 >= 0.0)) fail("sigma2 must be nonnegative");
  if (!(std::abs(rho) < 1.0)) fail("design correlation must satisfy |rho| < 1");
  if (runs < 1) fail("runs must be at least 1");
  if (test_n < 0) fail("test size must be nonnegative");
  for (int k : unpenalized) {
    if (k < 0 || k >= p) fail("unpenalized column out of range");
  }
}

namespace {

std::vector<int> first_columns(Index count) {
  std::vector<int> cols(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) cols[static_cast<std::size_t>(k)] = static_cast<int>(k);
  return cols;
}

Vector beta_with_head(Index p, std::initializer_list<double> head) {
  Vector b = Vector::Zero(p);
  Index k = 0;
  for (double v : head) b(k++) = v;
  return b;
}

// Symmetric square root factor S with S S^T = psi, valid for singular psi.
Matrix psd_factor(const Matrix& psi) {
  if (psi.rows() == 0) return psi;
  Eigen::SelfAdjointEigenSolver<Matrix> es(psi);
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

class DesignSampler {
 public:
  DesignSampler(Index p, double rho) : p_(p) {
    Matrix sigma(p, p);
    for (Index a = 0; a < p; ++a) {
      for (Index b = 0; b < p; ++b) {
        sigma(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
      }
    }
    lower_t_ = cholesky(sigma).lower().transpose();
  }

  Matrix draw(Index rows, Rng& rng) const {
    Matrix e(rows, p_);
    for (Index r = 0; r < rows; ++r) {
      for (Index k = 0; k < p_; ++k) e(r, k) = rng.normal();
    }
    Matrix x = e * lower_t_.triangularView<Eigen::Upper>();
    x.col(0).setOnes();
    return x;
  }

 private:
  Index p_;
  Matrix lower_t_;
};

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Moments {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return m;
}

}  // namespace

std::vector<std::string> scheme_names() {
  return {"L1", "L2", "H1", "H2", "H3", "H4", "P1", "P2", "P3"};
}

SimScheme scheme_preset(const std::string& name, std::optional<double> theta2) {
  SimScheme s;
  s.name = name;
  s.sigma2 = 0.25;
  s.rho = 0.2;
  const double t2 = theta2.value_or(0.56);
  auto scaled_identity = [](Index q, double v) { return Matrix(Matrix::Identity(q, q) * v); };

  if (name == "L1") {
    s.N = 25, s.n = 6, s.p = 10, s.q = 3;
    s.psi0 = scaled_identity(3, t2);
  } else if (name == "L2") {
    s.N = 30, s.n = 6, s.p = 15, s.q = 3;
    s.psi0.resize(3, 3);
    s.psi0 << 5, 2, 0.5, 2, 2, 1, 0.5, 1, 1;
    s.fit_kind = CovarianceKind::General;
  } else if (name == "H1") {
    s.N = 25, s.n = 6, s.p = 300, s.q = 2;
    s.psi0 = scaled_identity(2, t2);
  } else if (name == "H2") {
    s.N = 30, s.n = 6, s.p = 500, s.q = 1;
    s.psi0 = scaled_identity(1, t2);
  } else if (name == "H3") {
    s.N = 30, s.n = 6, s.p = 1000, s.q = 3;
    s.psi0 = scaled_identity(3, t2);
  } else if (name == "H4") {
    s.N = 25, s.n = 6, s.p = 300, s.q = 3;
    s.psi0 = Eigen::Vector3d(3.0, 3.0, 2.0).asDiagonal();
    s.fit_kind = CovarianceKind::Diagonal;
    s.fit_q = 4;
  } else if (name == "P1" || name == "P2" || name == "P3") {
    s.N = 25, s.n = 6, s.q = 3;
    s.p = name == "P1" ? 10 : (name == "P2" ? 100 : 500);
    s.sigma2 = 1.0;
    s.psi0 = scaled_identity(3, theta2.value_or(1.0));
    s.beta0 = beta_with_head(s.p, {1.0, 1.5, 1.2, 1.0, 2.0});
    s.test_n = 50;
  } else {
    throw InvalidArgument("unknown scheme '" + name + "'");
  }
  if (s.beta0.size() == 0) s.beta0 = beta_with_head(s.p, {1.0, 2.0, 4.0, 3.0, 3.0});
  if (name != "H4") s.fit_q = s.q;
  // The intercept and every covariate carrying a random effect stay unpenalized.
  s.unpenalized = first_columns(std::max<Index>(1, s.fit_q));
  return s;
}

std::string scheme_to_json(const SimScheme& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["N"] = s.N;
  j["n"] = s.n;
  j["p"] = s.p;
  j["q"] = s.q;
  j["beta0"] = std::vector<double>(s.beta0.data(), s.beta0.data() + s.beta0.size());
  nlohmann::json psi = nlohmann::json::array();
  for (Index a = 0; a < s.psi0.rows(); ++a) {
    std::vector<double> row(static_cast<std::size_t>(s.psi0.cols()));
    for (Index b = 0; b < s.psi0.cols(); ++b) row[static_cast<std::size_t>(b)] = s.psi0(a, b);
    psi.push_back(row);
  }
  j["psi0"] = psi;
  j["sigma2"] = s.sigma2;
  j["rho"] = s.rho;
  j["unpenalized"] = s.unpenalized;
  j["fit_kind"] = to_string(s.fit_kind);
  j["fit_q"] = s.fit_q;
  j["test_n"] = s.test_n;
  j["runs"] = s.runs;
  j["seed"] = s.seed;
  return j.dump(2) + "\n";
}

SimScheme scheme_from_json(const std::string& text) {
  SimScheme s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.name = j.at("name").get<std::string>();
    s.N = j.at("N").get<Index>();
    s.n = j.at("n").get<Index>();
    s.p = j.at("p").get<Index>();
    s.q = j.at("q").get<Index>();
    const auto beta = j.at("beta0").get<std::vector<double>>();
    s.beta0 = Eigen::Map<const Vector>(beta.data(), static_cast<Index>(beta.size()));
    const auto psi = j.at("psi0").get<std::vector<std::vector<double>>>();
    s.psi0.resize(static_cast<Index>(psi.size()), static_cast<Index>(psi.size()));
    for (std::size_t a = 0; a < psi.size(); ++a) {
      if (psi[a].size() != psi.size()) throw InvalidArgument("psi0 must be square");
      for (std::size_t b = 0; b < psi.size(); ++b) {
        s.psi0(static_cast<Index>(a), static_cast<Index>(b)) = psi[a][b];
      }
    }
    s.sigma2 = j.at("sigma2").get<double>();
    s.rho = j.value("rho", 0.2);
    s.unpenalized = j.value("unpenalized", std::vector<int>{0});
    s.fit_kind = covariance_kind_from_string(j.value("fit_kind", std::string("identity")));
    s.fit_q = j.value("fit_q", s.q);
    s.test_n = j.value("test_n", Index{0});
    s.runs = j.value("runs", 20);
    s.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed scheme file: ") + e.what());
  }
  s.validate();
  return s;
}

Matrix generate_design(Index p, double rho, Index rows, Rng& rng) {
  if (!(std::abs(rho) < 1.0)) {
    throw InvalidArgument("design correlation must satisfy |rho| < 1");
  }
  return DesignSampler(p, rho).draw(rows, rng);
}

SimulatedData simulate_dataset(const SimScheme& scheme, std::uint64_t run_seed) {
  scheme.validate();
  const DesignSampler sampler(scheme.p, scheme.rho);
  const Matrix psi_root = psd_factor(scheme.psi0);
  const double sigma = std::sqrt(scheme.sigma2);
  const Rng run_rng(run_seed);

  SimulatedData out;
  out.truth.beta0 = scheme.beta0;
  out.truth.psi0 = scheme.psi0;
  out.truth.sigma2 = scheme.sigma2;
  out.truth.random_columns = first_columns(scheme.q);

  std::vector<Group> train;
  std::vector<Group> test;
  const int width = static_cast<int>(std::to_string(scheme.N).size());
  for (Index i = 0; i < scheme.N; ++i) {
    Rng rng = run_rng.substream(static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "g%0*lld", width, static_cast<long long>(i + 1));

    Group g;
    g.id = id;
    g.x = sampler.draw(scheme.n, rng);
    Vector u(scheme.q);
    for (Index k = 0; k < scheme.q; ++k) u(k) = rng.normal();
    const Vector b = psi_root * u;
    Vector y = g.x * scheme.beta0;
    if (scheme.q > 0) y += g.x.leftCols(scheme.q) * b;
    for (Index j = 0; j < scheme.n; ++j) y(j) += sigma * rng.normal();
    g.y = std::move(y);
    out.truth.b.push_back(b);

    if (scheme.test_n > 0) {
      Group t;
      t.id = g.id;
      t.x = sampler.draw(scheme.test_n, rng);
      Vector yt = t.x * scheme.beta0;
      if (scheme.q > 0) yt += t.x.leftCols(scheme.q) * b;
      for (Index j = 0; j < scheme.test_n; ++j) yt(j) += sigma * rng.normal();
      t.y = std::move(yt);
      test.push_back(std::move(t));
    }
    train.push_back(std::move(g));
  }
  out.train = GroupedDataset(std::move(train), first_columns(scheme.fit_q));
  if (!test.empty()) out.test = GroupedDataset(std::move(test), first_columns(scheme.fit_q));
  return out;
}

double excess_risk(const std::vector<Matrix>& x, const Vector& beta, const std::vector<Matrix>& v,
                   const Vector& beta0, const std::vector<Matrix>& v0) {
  if (x.size() != v.size() || x.size() != v0.size() || x.empty()) {
    throw DimensionMismatch("excess risk needs one design and two covariances per group");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const CholeskyFactor f = cholesky(v[i]);
    const CholeskyFactor f0 = cholesky(v0[i]);
    const Vector diff = x[i] * (beta0 - beta);
    const Matrix vinv_v0 = f.solve(v0[i]);
    const double n = static_cast<double>(x[i].rows());
    total += 0.5 * (f.log_det() - f0.log_det() + vinv_v0.trace() +
                    f.solve_lower(diff).squaredNorm() - n);
  }
  return std::max(0.0, total / static_cast<double>(x.size()));
}

double excess_risk(const ParameterVector& phi, const GroupedDataset& data, const SimTruth& truth) {
  std::vector<Matrix> xs;
  std::vector<Matrix> v;
  std::vector<Matrix> v0;
  const Index q0 = static_cast<Index>(truth.random_columns.size());
  for (const auto& g : data.groups()) {
    xs.push_back(g.x);
    v.push_back(marginal_covariance(g.z, phi.cov, phi.sigma2()));
    Matrix vt = Matrix::Identity(g.x.rows(), g.x.rows()) * truth.sigma2;
    if (q0 > 0) {
      const Matrix z0 = g.x.leftCols(q0);
      vt += z0 * truth.psi0 * z0.transpose();
    }
    v0.push_back(std::move(vt));
  }
  return excess_risk(xs, phi.beta, v, truth.beta0, v0);
}

const char* to_string(Method m) {
  switch (m) {
    case Method::LmmLasso:
      return "lmmLasso";
    case Method::LmmAdLasso:
      return "lmmadLasso";
    case Method::Lasso:
      return "Lasso";
    case Method::AdLasso:
      return "adLasso";
    case Method::CvLasso:
      return "cvLasso";
  }
  return "lmmLasso";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::LmmLasso, Method::LmmAdLasso, Method::Lasso, Method::AdLasso,
                   Method::CvLasso}) {
    if (name == to_string(m)) return m;
  }
  throw InvalidArgument("unknown method '" + name + "'");
}

bool is_mixed(Method m) { return m == Method::LmmLasso || m == Method::LmmAdLasso; }

RunMetrics evaluate_fit(const FitResult& fit, bool mixed, const SimulatedData& sim) {
  RunMetrics m;
  const ParameterVector& phi = fit.phi_hat;
  const Vector& beta0 = sim.truth.beta0;
  for (Index k = 0; k < phi.p(); ++k) {
    if (phi.beta(k) != 0.0) ++m.active_size;
  }
  Index s0 = 0;
  for (Index k = 0; k < beta0.size(); ++k) {
    if (beta0(k) == 0.0) continue;
    ++s0;
    if (phi.beta(k) != 0.0) ++m.true_positives;
  }
  m.screening = m.true_positives == s0;
  m.sigma2 = phi.sigma2();
  if (mixed) {
    const Matrix psi = phi.cov.psi();
    for (Index k = 0; k < psi.rows(); ++k) m.psi_diag.push_back(psi(k, k));
  }
  for (Index k = 0; k < std::min<Index>(5, phi.p()); ++k) m.beta_head.push_back(phi.beta(k));
  m.lambda = fit.lambda;

  if (sim.test) {
    Vector y_hat;
    if (mixed) {
      const RandomEffectPrediction b = predict_random_effects(phi, sim.train);
      y_hat = predict_response(phi, b, *sim.test).y_hat;
    } else {
      y_hat = sim.test->stacked_x() * phi.beta;
    }
    m.test_mse = (sim.test->stacked_y() - y_hat).squaredNorm() / static_cast<double>(y_hat.size());
  }
  if (mixed) {
    m.excess_risk = excess_risk(phi, sim.train, sim.truth);
  } else {
    ParameterVector flat = phi;
    flat.cov = CovarianceStructure::scaled_identity(phi.cov.kind(), phi.cov.q(), 0.0);
    m.excess_risk = excess_risk(flat, sim.train, sim.truth);
  }
  m.kkt_residual = fit.kkt_residual;
  m.converged = fit.converged;
  m.monotone = trace_is_monotone(fit.objective_trace);
  return m;
}

namespace {

// Second stage with weights 1/|beta_first|.
FitResult adaptive_fit(const GroupedDataset& train, CovarianceKind kind, const PenaltyWeights& base,
                       const FitResult& first, const RunOptions& opts, bool plain,
                       const Vector& beta_cv) {
  const PenaltyWeights w = adaptive_weights(first.phi_hat.beta, base);
  PathOptions po = opts.path;
  po.plain_lasso = plain;
  if (w.num_penalized() > 0) {
    return lambda_path(train, kind, w, opts.solver, po, beta_cv).best;
  }
  // Nothing left to penalize: refit the surviving coefficients unpenalized.
  if (plain) {
    const GroupedDataset masked = train.without_random_effects();
    SolverOptions so = opts.solver;
    so.freeze_variance = true;
    ParameterVector start = first.phi_hat;
    start.rho = 0.0;
    FitResult f = fit(masked, 0.0, w, start, so);
    profile_residual_variance(f, masked);
    return f;
  }
  return fit(train, 0.0, w, first.phi_hat, opts.solver);
}

struct RunOutcome {
  std::map<Method, RunMetrics> metrics;
  std::map<Method, std::string> failures;
};

RunOutcome run_once(const SimScheme& scheme, const RunOptions& opts, int run) {
  RunOutcome out;
  const SimulatedData sim =
      simulate_dataset(scheme, derive_seed(scheme.seed, static_cast<std::uint64_t>(run)));
  const PenaltyWeights base = PenaltyWeights::with_unpenalized(scheme.p, scheme.unpenalized);
  auto wants = [&](Method m) {
    return std::find(opts.methods.begin(), opts.methods.end(), m) != opts.methods.end();
  };

  LassoCvResult cv;
  try {
    cv = lasso_cv(sim.train, base, opts.path.cv_folds);
  } catch (const Error& e) {
    for (Method m : opts.methods) out.failures[m] = e.what();
    return out;
  }

  auto record = [&](Method m, auto&& produce) -> std::optional<FitResult> {
    try {
      FitResult f = produce();
      if (wants(m)) out.metrics[m] = evaluate_fit(f, is_mixed(m), sim);
      return f;
    } catch (const Error& e) {
      if (wants(m)) out.failures[m] = e.what();
      return std::nullopt;
    }
  };

  if (wants(Method::LmmLasso) || wants(Method::LmmAdLasso)) {
    PathOptions po = opts.path;
    po.plain_lasso = false;
    const auto first = record(Method::LmmLasso, [&] {
      return lambda_path(sim.train, scheme.fit_kind, base, opts.solver, po, cv.beta).best;
    });
    if (wants(Method::LmmAdLasso)) {
      if (first) {
        record(Method::LmmAdLasso, [&] {
          return adaptive_fit(sim.train, scheme.fit_kind, base, *first, opts, false, cv.beta);
        });
      } else {
        out.failures[Method::LmmAdLasso] = "first-stage fit failed";
      }
    }
  }
  if (wants(Method::Lasso) || wants(Method::AdLasso)) {
    PathOptions po = opts.path;
    po.plain_lasso = true;
    const auto first = record(Method::Lasso, [&] {
      return lambda_path(sim.train, scheme.fit_kind, base, opts.solver, po).best;
    });
    if (wants(Method::AdLasso)) {
      if (first) {
        record(Method::AdLasso, [&] {
          return adaptive_fit(sim.train, scheme.fit_kind, base, *first, opts, true, cv.beta);
        });
      } else {
        out.failures[Method::AdLasso] = "first-stage fit failed";
      }
    }
  }
  if (wants(Method::CvLasso)) {
    record(Method::CvLasso, [&] {
      // Lasso at the cross-validated lambda, expressed as a fit with sigma^2
      // frozen at 1 and profiled afterwards.
      const GroupedDataset masked = sim.train.without_random_effects();
      FitResult f;
      f.phi_hat = ParameterVector{
          cv.beta, CovarianceStructure::scaled_identity(scheme.fit_kind, sim.train.q(), 0.0), 0.0};
      f.lambda = cv.lambda;
      f.weights = base;
      f.variance_frozen = true;
      f.converged = true;
      for (Index k = 0; k < cv.beta.size(); ++k) {
        if (cv.beta(k) != 0.0) f.active_set.push_back(k);
      }
      f.objective_value = objective(masked, f.phi_hat, cv.lambda, base);
      f.objective_trace = {f.objective_value};
      f.kkt_residual = kkt_residual(masked, f.phi_hat, cv.lambda, base, true);
      profile_residual_variance(f, masked);
      return f;
    });
  }
  return out;
}

}  // namespace

SchemeReport run_scheme(const SimScheme& scheme, const RunOptions& opts) {
  scheme.validate();
  opts.solver.validate();
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(scheme.runs));
  const int workers = std::max(1, std::min(opts.workers, scheme.runs));
  if (workers == 1) {
    for (int r = 0; r < scheme.runs; ++r) {
      outcomes[static_cast<std::size_t>(r)] = run_once(scheme, opts, r);
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < scheme.runs; r = next++) {
          outcomes[static_cast<std::size_t>(r)] = run_once(scheme, opts, r);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  SchemeReport report;
  report.scheme = scheme;
  for (Method m : opts.methods) {
    MethodRuns mr{m, {}, {}, 0, {}};
    for (int r = 0; r < scheme.runs; ++r) {
      const RunOutcome& o = outcomes[static_cast<std::size_t>(r)];
      if (auto it = o.metrics.find(m); it != o.metrics.end()) {
        mr.run_index.push_back(r);
        mr.runs.push_back(it->second);
      } else {
        ++mr.failures;
        const auto f = o.failures.find(m);
        mr.failure_messages.push_back("run " + std::to_string(r) + ": " +
                                      (f != o.failures.end() ? f->second : "not run"));
      }
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

void write_summary_tsv(std::ostream& os, const SchemeReport& report,
                       const std::vector<std::string>& provenance) {
  for (const auto& line : provenance) os << "# " << line << "\n";
  const Index fit_q = report.scheme.fit_q;
  const Index n_beta = std::min<Index>(5, report.scheme.p);

  os << "scheme\tmethod\truns\tfailures\tactive_size_mean\tactive_size_sd\ttp_mean\ttp_sd"
        "\tscreening_rate\tsigma2_mean\tsigma2_sd";
  for (Index k = 0; k < fit_q; ++k) os << "\tpsi" << k + 1 << "_mean\tpsi" << k + 1 << "_sd";
  for (Index k = 0; k < n_beta; ++k) os << "\tbeta" << k + 1 << "_mean\tbeta" << k + 1 << "_sd";
  os << "\ttest_mse_mean\ttest_mse_sd\texcess_risk_mean\texcess_risk_sd\tconverged_rate\n";

  for (const auto& mr : report.methods) {
    auto column = [&](auto get) {
      std::vector<double> xs;
      for (const auto& r : mr.runs) {
        const double v = get(r);
        if (!std::isnan(v)) xs.push_back(v);
      }
      return moments(xs);
    };
    auto emit = [&](const Moments& m) {
      os << "\t" << format_number(m.mean) << "\t" << format_number(m.sd);
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    os << report.scheme.name << "\t" << to_string(mr.method) << "\t" << mr.runs.size() << "\t"
       << mr.failures;
    emit(column([](const RunMetrics& r) { return static_cast<double>(r.active_size); }));
    emit(column([](const RunMetrics& r) { return static_cast<double>(r.true_positives); }));
    os << "\t" << format_number(column([](const RunMetrics& r) {
                   return r.screening ? 1.0 : 0.0;
                 }).mean);
    emit(column([](const RunMetrics& r) { return r.sigma2; }));
    for (Index k = 0; k < fit_q; ++k) {
      emit(column([&](const RunMetrics& r) {
        const auto kk = static_cast<std::size_t>(k);
        return kk < r.psi_diag.size() ? r.psi_diag[kk] : nan;
      }));
    }
    for (Index k = 0; k < n_beta; ++k) {
      emit(column([&](const RunMetrics& r) { return r.beta_head[static_cast<std::size_t>(k)]; }));
    }
    emit(column([&](const RunMetrics& r) { return r.test_mse.value_or(nan); }));
    emit(column([](const RunMetrics& r) { return r.excess_risk; }));
    os << "\t" << format_number(column([](const RunMetrics& r) {
                   return r.converged ? 1.0 : 0.0;
                 }).mean);
    os << "\n";
  }
}

void write_runs_tsv(std::ostream& os, const SchemeReport& report) {
  os << "scheme\tmethod\trun\tlambda\tactive_size\ttp\tscreening\tsigma2\tpsi_diag\tbeta_head"
        "\ttest_mse\texcess_risk\tkkt_residual\tconverged\tmonotone\n";
  auto join = [](const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_number(xs[i]);
    return s.empty() ? std::string("NA") : s;
  };
  for (const auto& mr : report.methods) {
    for (std::size_t i = 0; i < mr.runs.size(); ++i) {
      const RunMetrics& r = mr.runs[i];
      os << report.scheme.name << "\t" << to_string(mr.method) << "\t" << mr.run_index[i] << "\t"
         << format_number(r.lambda) << "\t" << r.active_size << "\t" << r.true_positives << "\t"
         << (r.screening ? 1 : 0) << "\t" << format_number(r.sigma2) << "\t" << join(r.psi_diag)
         << "\t" << join(r.beta_head) << "\t"
         << (r.test_mse ? format_number(*r.test_mse) : std::string("NA")) << "\t"
         << format_number(r.excess_risk) << "\t" << format_number(r.kkt_residual) << "\t"
         << (r.converged ? 1 : 0) << "\t" << (r.monotone ? 1 : 0) << "\n";
    }
  }
}

}  // namespace penlmm
