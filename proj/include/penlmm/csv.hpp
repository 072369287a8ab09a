#pragma once

// Delimited text ingestion for grouped data.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "penlmm/model.hpp"

namespace penlmm {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Header row then one record per line. Fields may be double-quoted. The
// delimiter is a tab when the header has tabs and no commas, else a comma.
Table read_table(std::istream& in);
Table read_table_file(const std::string& path);

std::vector<std::string> split_list(const std::string& s, char sep = ',');

inline constexpr const char* kInterceptName = "(Intercept)";

struct DataSpec {
  std::string group_col;
  std::string response_col;
  // Names of covariates with a random effect; "(Intercept)" is allowed.
  std::vector<std::string> random_cols{kInterceptName};
  // Covariate columns to use, in order. Empty: every column except group and
  // response, in header order.
  std::vector<std::string> covariates;
  bool standardize = false;
  // Known centering and scaling (e.g. from a model artifact); overrides
  // `standardize`.
  std::optional<std::vector<double>> center;
  std::optional<std::vector<double>> scale;
  // Response may be absent (prediction input).
  bool response_optional = false;
};

struct LoadedData {
  GroupedDataset data;
  std::vector<std::string> column_names;  // "(Intercept)" first
  std::vector<double> center;             // per covariate, excluding the intercept
  std::vector<double> scale;
  bool has_response = true;
  // Input data-row number (0-based) of each observation, in dataset order.
  std::vector<std::size_t> source_row;
};

// Rows are canonicalized: groups ordered by id, rows within a group ordered
// lexicographically by (response, covariates), so input row order does not
// matter. Throws ConfigError for missing columns and MalformedInput for
// unparseable values.
LoadedData load_grouped(const Table& table, const DataSpec& spec);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace penlmm
