#pragma once

// Model artifact: a versioned, line-oriented text file that carries
// everything prediction needs. Numbers are written in shortest round-trip
// form, so reading an artifact back reproduces every field exactly.
//
//   penlmm-model 1
//   key value             (header fields)
//   [columns]             name center scale weight
//   [coefficients]        name value active
//   [theta]               value
//   [psi]                 row of q values
//   [random_effects]      group b_1 ... b_q
//   [trace]               objective value per cycle

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "penlmm/optimizer.hpp"
#include "penlmm/predict.hpp"

namespace penlmm {

inline constexpr int kArtifactVersion = 1;

struct ModelArtifact {
  std::string group_col;
  std::string response_col;
  std::vector<std::string> column_names;  // "(Intercept)" first
  std::vector<double> center;             // per covariate, intercept excluded
  std::vector<double> scale;
  std::vector<std::string> random_cols;
  FitResult fit;
  double bic = 0.0;
  Index n_total = 0;
  Index num_groups = 0;
  RandomEffectPrediction effects;
  // Free-form extras written as "key value" header lines.
  std::map<std::string, std::string> extra;
};

void write_artifact(std::ostream& os, const ModelArtifact& a);
ModelArtifact read_artifact(std::istream& is);

// Writes to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace penlmm
