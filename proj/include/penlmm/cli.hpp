#pragma once

// Command-line front end. Every command returns a process exit status:
//   0 success, 2 malformed input, 3 solver did not converge (outputs are still
//   written), 4 configuration error, 1 any other failure.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace penlmm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMalformedInput = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitConfig = 4;

inline constexpr const char* kVersion = "0.1.0";

struct FitConfig {
  std::string data;
  std::string group_col = "group";
  std::string response_col = "y";
  std::vector<std::string> random_cols{"(Intercept)"};
  std::vector<std::string> unpenalized;  // beyond the intercept and random-effect columns
  std::string psi = "identity";
  std::optional<double> lambda;
  int grid = 30;
  double ratio = 0.01;
  bool adaptive = false;
  bool standardize = true;
  int folds = 10;
  int max_cycles = 500;
  double rel_tol = 1e-6;
  double param_tol = 1e-4;
  std::string out;    // model artifact
  std::string table;  // path table (path command)
};

struct PredictConfig {
  std::string model;
  std::string data;
  std::string out;
  std::string effects_out;
};

struct SimulateConfig {
  std::string scheme;
  std::string scheme_file;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta2;
  std::vector<std::string> methods;
  int workers = 1;
  std::string out;
  std::string runs_out;
  std::string write_scheme;
};

struct SelectConfig {
  FitConfig fit;
  double kappa = 0.05;
  std::size_t max_candidates = 0;
  std::string out;
};

int cmd_fit(const FitConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_path(const FitConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_select_structure(const SelectConfig& cfg, std::ostream& out, std::ostream& err);
// Pretty-prints a simulation summary table as "mean (sd)" columns.
int cmd_report(const std::string& summary_path, std::ostream& out, std::ostream& err);

// Parses arguments (argv[0] included) and dispatches.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace penlmm
