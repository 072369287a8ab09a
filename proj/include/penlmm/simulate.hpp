#pragma once

// Synthetic grouped data, evaluation metrics and the experiment driver.
//
// Seeds: the scheme seed yields one seed per run, derive_seed(seed, run), and
// each run seed yields one substream per group, derive_seed(run_seed, group).
// A group's stream draws its training design, random effect, training noise,
// then its test design and test noise, in that order.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "penlmm/predict.hpp"
#include "penlmm/rng.hpp"
#include "penlmm/selection.hpp"

namespace penlmm {

struct SimScheme {
  std::string name;
  Index N = 25;
  Index n = 6;
  Index p = 10;
  Index q = 3;  // dimension of the true random effects
  Vector beta0;
  Matrix psi0;  // q x q
  double sigma2 = 0.25;
  double rho = 0.2;
  std::vector<int> unpenalized;
  CovarianceKind fit_kind = CovarianceKind::IdentityMultiple;
  Index fit_q = 3;   // random-effect columns used by the fitted model
  Index test_n = 0;  // test observations per group, 0 for none
  int runs = 20;
  std::uint64_t seed = 1;

  void validate() const;
};

// L1, L2, H1..H4, P1..P3. theta2 overrides the random-effect variance of the
// schemes with Psi = theta^2 I; ignored for L2 and H4.
SimScheme scheme_preset(const std::string& name, std::optional<double> theta2 = std::nullopt);
std::vector<std::string> scheme_names();

std::string scheme_to_json(const SimScheme& s);
SimScheme scheme_from_json(const std::string& text);

// AR(1) correlated rows, Sigma_kk' = rho^|k-k'|, first column set to 1.
Matrix generate_design(Index p, double rho, Index rows, Rng& rng);

struct SimTruth {
  Vector beta0;
  Matrix psi0;
  double sigma2 = 0.0;
  std::vector<int> random_columns;  // first q columns
  std::vector<Vector> b;            // per group
};

struct SimulatedData {
  GroupedDataset train;  // random-effect columns: first fit_q
  std::optional<GroupedDataset> test;
  SimTruth truth;
};

SimulatedData simulate_dataset(const SimScheme& scheme, std::uint64_t run_seed);

// Mean over groups of KL(N(X_i beta0, V0_i) || N(X_i beta, V_i)).
double excess_risk(const std::vector<Matrix>& x, const Vector& beta, const std::vector<Matrix>& v,
                   const Vector& beta0, const std::vector<Matrix>& v0);
// V_i from phi and the Z of `data`; V0_i from the truth.
double excess_risk(const ParameterVector& phi, const GroupedDataset& data, const SimTruth& truth);

enum class Method { LmmLasso, LmmAdLasso, Lasso, AdLasso, CvLasso };
const char* to_string(Method m);
Method method_from_string(const std::string& name);
bool is_mixed(Method m);

struct RunMetrics {
  Index active_size = 0;
  Index true_positives = 0;
  bool screening = false;  // S0 within S(beta_hat)
  double sigma2 = 0.0;
  std::vector<double> psi_diag;  // empty for the lasso baselines
  std::vector<double> beta_head;  // first five coefficients
  double lambda = 0.0;
  std::optional<double> test_mse;
  double excess_risk = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
  bool monotone = true;
};

// sigma^2 and Psi are read from phi; `mixed` selects the prediction rule.
RunMetrics evaluate_fit(const FitResult& fit, bool mixed, const SimulatedData& sim);

struct MethodRuns {
  Method method;
  std::vector<int> run_index;
  std::vector<RunMetrics> runs;
  int failures = 0;
  std::vector<std::string> failure_messages;
};

struct SchemeReport {
  SimScheme scheme;
  std::vector<MethodRuns> methods;
};

struct RunOptions {
  std::vector<Method> methods{Method::LmmLasso, Method::LmmAdLasso, Method::Lasso,
                              Method::AdLasso, Method::CvLasso};
  SolverOptions solver;
  PathOptions path;
  int workers = 1;
};

SchemeReport run_scheme(const SimScheme& scheme, const RunOptions& opts = {});

// Per method: run counts, then mean and sd of every metric. Lines starting
// with '#' carry provenance.
void write_summary_tsv(std::ostream& os, const SchemeReport& report,
                       const std::vector<std::string>& provenance = {});
// One line per (method, run).
void write_runs_tsv(std::ostream& os, const SchemeReport& report);

}  // namespace penlmm
