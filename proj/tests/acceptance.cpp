// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails. Thresholds are fixed here and never tuned to the
// observed numbers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "penlmm/cli.hpp"
#include "penlmm/optimizer.hpp"
#include "penlmm/predict.hpp"
#include "penlmm/selection.hpp"
#include "penlmm/simulate.hpp"
#include "reference_mle.hpp"

using namespace penlmm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr CovarianceKind kKinds[] = {CovarianceKind::IdentityMultiple, CovarianceKind::Diagonal,
                                     CovarianceKind::General};

// Every solver fit made by the gate, for the descent and stationarity check.
struct FitLog {
  int fits = 0;
  int non_monotone = 0;
  int converged = 0;
  int kkt_violations = 0;
  double worst_kkt = 0.0;

  void add(bool monotone, bool conv, double kkt) {
    ++fits;
    if (!monotone) ++non_monotone;
    if (conv) {
      ++converged;
      worst_kkt = std::max(worst_kkt, kkt);
      if (kkt > 1e-3) ++kkt_violations;
    }
  }
  void add(const FitResult& f) {
    add(trace_is_monotone(f.objective_trace), f.converged, f.kkt_residual);
  }
};

FitLog g_log;

SolverOptions tight() {
  SolverOptions o;
  o.max_cycles = 5000;
  o.rel_obj_tol = 1e-15;
  o.max_param_tol = 1e-11;
  o.kkt_tol = 1e-8;
  return o;
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int q = oracle::uniform_int(gen, 1, 3);
    auto inst = oracle::random_instance(gen, oracle::uniform_int(gen, 1, 5), 6,
                                        oracle::uniform_int(gen, q, 8), q, kKinds[rep % 3]);
    const auto g = [&](const ParameterVector& phi) { return oracle::dense_smooth(inst.data, phi); };
    for (Index j = 0; j < inst.phi.size(); ++j) {
      const double fd = oracle::central_difference(g, inst.phi, j, 1e-5);
      const double an = inst.phi.is_beta(j)
                            ? gradient_beta(inst.data, inst.phi, j)
                            : gradient_eta(inst.data, inst.phi, j - inst.phi.p());
      worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-6 && secs < 10.0,
          fmt("max relative error %.2e over 50 instances, %.2f s", worst, secs)};
}

Outcome likelihood_equivalence() {
  std::mt19937_64 gen(102);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int q = oracle::uniform_int(gen, 1, 3);
    auto inst = oracle::random_instance(gen, oracle::uniform_int(gen, 1, 8), 8, 6, q,
                                        kKinds[rep % 3]);
    worst = std::max(worst, std::abs(neg_log_likelihood(inst.data, inst.phi) -
                                     oracle::dense_neg_loglik(inst.data, inst.phi)));
  }
  return {worst <= 1e-10, fmt("max |block - dense| = %.2e over 20 instances", worst)};
}

Outcome lasso_degeneration() {
  std::mt19937_64 gen(104);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int p = oracle::uniform_int(gen, 3, 10);
    auto inst = oracle::random_instance(gen, oracle::uniform_int(gen, 3, 8), 6, p, 1,
                                        CovarianceKind::IdentityMultiple);
    const GroupedDataset masked = inst.data.without_random_effects();
    const PenaltyWeights w = PenaltyWeights::defaults(inst.data);
    SolverOptions o = tight();
    o.freeze_variance = true;
    ParameterVector phi = inst.phi;
    phi.beta.setZero();
    phi.rho = 0.0;
    const double lambda = oracle::uniform(gen, 0.1, 8.0);
    const FitResult f = fit(masked, lambda, w, phi, o);
    g_log.add(f);
    std::vector<double> pen(static_cast<std::size_t>(p), 1.0);
    pen[0] = 0.0;
    const Vector ref = oracle::reference_lasso(oracle::stacked_x(masked),
                                               oracle::stacked_y(masked), pen, lambda);
    worst = std::max(worst, (f.phi_hat.beta - ref).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-6, fmt("max |beta - reference lasso| = %.2e over 10 triples", worst)};
}

Outcome mle_equivalence() {
  std::mt19937_64 gen(105);
  double worst_beta = 0.0;
  double worst_nll = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    auto inst = oracle::random_instance(gen, 20, 4, 5, 1, CovarianceKind::IdentityMultiple, false);
    // Add a genuine group effect so the variance estimate is interior.
    std::vector<Group> gs = inst.data.groups();
    for (auto& g : gs) g.y.array() += 1.5 * oracle::normal(gen);
    const GroupedDataset data(std::move(gs), {0});
    const PenaltyWeights w = PenaltyWeights::defaults(data);
    ParameterVector start{Vector::Zero(5),
                          CovarianceStructure::scaled_identity(CovarianceKind::IdentityMultiple, 1, 0.5),
                          0.0};
    const FitResult f = fit(data, 0.0, w, start, tight());
    g_log.add(f);
    Vector eta(2);
    eta << 0.7, 0.0;
    const auto ref = oracle::reference_mle(data, CovarianceKind::IdentityMultiple, eta);
    worst_beta = std::max(worst_beta, (f.phi_hat.beta - ref.phi.beta).cwiseAbs().maxCoeff());
    worst_nll = std::max(worst_nll, std::abs(f.neg_loglik - ref.neg_loglik));
  }
  return {worst_beta < 1e-4 && worst_nll < 1e-6,
          fmt("max |beta diff| = %.2e, max |-loglik diff| = %.2e (Nelder-Mead reference)",
              worst_beta, worst_nll)};
}

Outcome closed_form_update() {
  std::mt19937_64 gen(106);
  double worst = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    const int q = oracle::uniform_int(gen, 1, 2);
    auto inst = oracle::random_instance(gen, 4, 6, 6, q, kKinds[rep % 3]);
    const PenaltyWeights w = PenaltyWeights::defaults(inst.data);
    const double lambda = oracle::uniform(gen, 0.0, 4.0);
    const Index k = oracle::uniform_int(gen, 0, 5);
    const auto obj = [&](double v) {
      ParameterVector phi = inst.phi;
      phi.beta(k) = v;
      return objective(inst.data, phi, lambda, w);
    };
    const double numeric = oracle::minimize_piecewise_quadratic(obj, -50.0, 50.0);
    const double closed = analytic_beta_update(inst.data, inst.phi, k, lambda, w);
    worst = std::max(worst, std::abs(closed - numeric));
  }
  return {worst < 1e-8, fmt("max |closed form - 1-D minimizer| = %.2e over 25 coordinates", worst)};
}

Outcome map_predictor() {
  std::mt19937_64 gen(107);
  double worst = 0.0;
  for (int rep = 0; rep < 9; ++rep) {
    auto inst = oracle::random_instance(gen, 5, 7, 5, 3, kKinds[rep % 3]);
    const auto pred = predict_random_effects(inst.phi, inst.data);
    const Matrix psi_inv = oracle::psi_of(inst.phi.cov).fullPivLu().inverse();
    const double s2 = std::exp(inst.phi.rho);
    for (Index i = 0; i < inst.data.num_groups(); ++i) {
      const auto& g = inst.data.group(i);
      const Vector r = g.y - g.x * inst.phi.beta;
      const Matrix a = g.z.transpose() * g.z / s2 + psi_inv;
      const Vector expect = a.fullPivLu().solve(g.z.transpose() * r / s2);
      worst = std::max(worst, (pred.b[static_cast<std::size_t>(i)] - expect).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-9, fmt("max |b - normal-equation solution| = %.2e", worst)};
}

Outcome excess_risk_mc() {
  std::mt19937_64 gen(108);
  const int draws = 1000000;
  double worst_z = 0.0;
  std::string detail;
  for (int pair = 0; pair < 5; ++pair) {
    auto truth = oracle::random_instance(gen, 2, 3, 3, 2, kKinds[pair % 3], false);
    auto other = oracle::random_instance(gen, 2, 3, 3, 2, kKinds[pair % 3], false);
    std::vector<Matrix> xs;
    std::vector<Matrix> v;
    std::vector<Matrix> v0;
    for (const auto& g : truth.data.groups()) {
      xs.push_back(g.x);
      v0.push_back(marginal_covariance(g.z, truth.phi.cov, truth.phi.sigma2()));
      v.push_back(marginal_covariance(g.z, other.phi.cov, other.phi.sigma2()));
    }
    const double closed = excess_risk(xs, other.phi.beta, v, truth.phi.beta, v0);

    // KL(p0 || p) = E_p0[log p0(y) - log p(y)], averaged over groups.
    double mean = 0.0;
    double var_of_mean = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vector mu0 = xs[i] * truth.phi.beta;
      const Vector mu = xs[i] * other.phi.beta;
      const Eigen::LLT<Matrix> l0(v0[i]);
      const Eigen::LLT<Matrix> l(v[i]);
      const Matrix lower0 = l0.matrixL();
      const double half_logdet0 = lower0.diagonal().array().log().sum();
      const double half_logdet = Matrix(l.matrixL()).diagonal().array().log().sum();
      const Index n = mu0.size();
      double s = 0.0;
      double ss = 0.0;
      Vector e(n);
      for (int d = 0; d < draws; ++d) {
        for (Index j = 0; j < n; ++j) e(j) = oracle::normal(gen);
        const Vector y = mu0 + lower0 * e;
        const Vector u = l.matrixL().solve(y - mu);
        const double diff = (-half_logdet0 - 0.5 * e.squaredNorm()) - (-half_logdet - 0.5 * u.squaredNorm());
        s += diff;
        ss += diff * diff;
      }
      const double m = s / draws;
      const double var = ss / draws - m * m;
      mean += m / static_cast<double>(xs.size());
      var_of_mean += var / draws / static_cast<double>(xs.size() * xs.size());
    }
    const double z = std::abs(mean - closed) / std::sqrt(var_of_mean);
    worst_z = std::max(worst_z, z);
    detail += fmt("%s%.4f/%.4f", pair ? " " : "", closed, mean);
  }
  return {worst_z < 3.0, fmt("max |closed - MC| / se = %.2f; closed/MC: %s", worst_z, detail.c_str())};
}

SchemeReport run(const std::string& name, std::optional<double> theta2, int runs,
                 std::vector<Method> methods) {
  SimScheme s = scheme_preset(name, theta2);
  s.runs = runs;
  RunOptions o;
  o.methods = std::move(methods);
  SchemeReport rep = run_scheme(s, o);
  for (const auto& m : rep.methods) {
    for (const auto& r : m.runs) g_log.add(r.monotone, r.converged, r.kkt_residual);
  }
  return rep;
}

const MethodRuns& method(const SchemeReport& rep, Method m) {
  for (const auto& mr : rep.methods) {
    if (mr.method == m) return mr;
  }
  throw std::runtime_error("method missing from report");
}

double mean_of(const MethodRuns& m, const std::function<double(const RunMetrics&)>& f) {
  double s = 0.0;
  for (const auto& r : m.runs) s += f(r);
  return m.runs.empty() ? std::nan("") : s / static_cast<double>(m.runs.size());
}

double screening_rate(const MethodRuns& m) {
  return mean_of(m, [](const RunMetrics& r) { return r.screening ? 1.0 : 0.0; });
}

Outcome scheme_l1(const SchemeReport& rep) {
  const auto& m = method(rep, Method::LmmLasso);
  const double tp = mean_of(m, [](const RunMetrics& r) { return static_cast<double>(r.true_positives); });
  const double s2 = mean_of(m, [](const RunMetrics& r) { return r.sigma2; });
  const double th = mean_of(m, [](const RunMetrics& r) { return r.psi_diag.at(0); });
  const bool ok = m.failures == 0 && m.runs.size() == 20 && tp == 5.0 && s2 >= 0.15 &&
                  s2 <= 0.35 && th >= 0.35 && th <= 0.80;
  return {ok, fmt("%zu runs, %d failures; mean TP %.2f, sigma^2 %.3f (reference 0.24), theta^2 %.3f (reference 0.55)",
                  m.runs.size(), m.failures, tp, s2, th)};
}

Outcome scheme_h1(const SchemeReport& rep) {
  const auto& lmm = method(rep, Method::LmmLasso);
  const auto& las = method(rep, Method::Lasso);
  const double tp = mean_of(lmm, [](const RunMetrics& r) { return static_cast<double>(r.true_positives); });
  const double s2_lmm = mean_of(lmm, [](const RunMetrics& r) { return r.sigma2; });
  const double s2_las = mean_of(las, [](const RunMetrics& r) { return r.sigma2; });
  const double ratio = s2_las / s2_lmm;
  const bool ok = lmm.failures == 0 && las.failures == 0 && lmm.runs.size() == 20 &&
                  tp == 5.0 && ratio > 3.0;
  return {ok, fmt("%zu+%zu runs; lmmLasso mean TP %.2f, sigma^2 %.3f; Lasso sigma^2 %.3f; ratio %.2f (reference 4.7)",
                  lmm.runs.size(), las.runs.size(), tp, s2_lmm, s2_las, ratio)};
}

Outcome scheme_p1(const SchemeReport& rep) {
  const auto& lmm = method(rep, Method::LmmLasso);
  const auto& las = method(rep, Method::Lasso);
  const double a = mean_of(lmm, [](const RunMetrics& r) { return r.test_mse.value(); });
  const double b = mean_of(las, [](const RunMetrics& r) { return r.test_mse.value(); });
  const bool ok = lmm.failures == 0 && las.failures == 0 && lmm.runs.size() == 20 && a < 0.5 * b;
  return {ok, fmt("mean test MSE lmmLasso %.3f vs Lasso %.3f, ratio %.3f (reference 1.67 vs 5.92)",
                  a, b, a / b)};
}

Outcome screening(const SchemeReport& l1, const SchemeReport& h1) {
  const double a = screening_rate(method(l1, Method::LmmLasso));
  const double b = screening_rate(method(h1, Method::LmmLasso));
  return {a >= 0.95 && b >= 0.95, fmt("S0 within S-hat: L1 %.0f%%, H1 %.0f%%", 100 * a, 100 * b)};
}

Outcome scheme_h4(const SchemeReport& rep) {
  const auto& m = method(rep, Method::LmmLasso);
  int below = 0;
  double mean = 0.0;
  for (const auto& r : m.runs) {
    const double v = r.psi_diag.at(3);
    mean += v / static_cast<double>(m.runs.size());
    if (v < 0.05) ++below;
  }
  const bool ok = m.failures == 0 && m.runs.size() == 10 && below >= 9;
  return {ok, fmt("spurious fourth variance < 0.05 in %d of %zu runs, mean %.4f (reference 0.01)",
                  below, m.runs.size(), mean)};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("penlmm_gate_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::string text[2];
  int codes[2];
  for (int k = 0; k < 2; ++k) {
    SimulateConfig c;
    c.scheme = "L1";
    c.runs = 3;
    c.seed = 2024;
    c.out = (dir / ("summary" + std::to_string(k) + ".tsv")).string();
    std::ostringstream out;
    std::ostringstream err;
    codes[k] = cmd_simulate(c, out, err);
    std::ifstream in(c.out, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    text[k] = os.str();
  }
  fs::remove_all(dir);
  const bool ok = codes[0] == 0 && codes[1] == 0 && !text[0].empty() && text[0] == text[1];
  return {ok, fmt("two executions, %zu bytes each, identical: %s", text[0].size(),
                  text[0] == text[1] ? "yes" : "no")};
}

Outcome monotone_and_stationary() {
  // A spread of penalized fits on random instances joins the fits already logged.
  std::mt19937_64 gen(103);
  for (int rep = 0; rep < 15; ++rep) {
    auto inst = oracle::random_instance(gen, 6, 6, 8, 2, kKinds[rep % 3]);
    ParameterVector phi = inst.phi;
    phi.beta.setZero();
    g_log.add(fit(inst.data, oracle::uniform(gen, 0.1, 4.0), PenaltyWeights::defaults(inst.data), phi));
  }
  const bool ok = g_log.non_monotone == 0 && g_log.kkt_violations == 0;
  return {ok, fmt("%d fits: %d non-monotone traces; %d converged, %d with KKT residual > 1e-3 (worst %.2e)",
                  g_log.fits, g_log.non_monotone, g_log.converged, g_log.kkt_violations, g_log.worst_kkt)};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  int failed = 0;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  };

  report(1, "gradient correctness", gradients);
  report(2, "oracle likelihood equivalence", likelihood_equivalence);
  report(4, "lasso degeneration", lasso_degeneration);
  report(5, "unpenalized MLE equivalence", mle_equivalence);
  report(6, "closed-form coordinate update", closed_form_update);
  report(7, "MAP predictor", map_predictor);
  report(8, "excess-risk diagnostic", excess_risk_mc);

  SchemeReport l1;
  SchemeReport h1;
  report(9, "scheme L1", [&] {
    l1 = run("L1", std::nullopt, 20, {Method::LmmLasso});
    return scheme_l1(l1);
  });
  report(10, "scheme H1", [&] {
    h1 = run("H1", std::nullopt, 20, {Method::LmmLasso, Method::Lasso});
    return scheme_h1(h1);
  });
  report(11, "prediction P1 theta^2=2", [&] {
    return scheme_p1(run("P1", 2.0, 20, {Method::LmmLasso, Method::Lasso}));
  });
  report(12, "screening", [&] { return screening(l1, h1); });
  report(13, "H4 misspecification", [&] {
    return scheme_h4(run("H4", std::nullopt, 10, {Method::LmmLasso}));
  });
  report(14, "determinism", determinism);
  report(3, "monotone descent and stationarity", monotone_and_stationary);

  std::printf("%d of 14 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
