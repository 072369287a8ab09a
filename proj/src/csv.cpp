#include "penlmm/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "penlmm/error.hpp"

namespace penlmm {

namespace {

std::vector<std::string> split_record(const std::string& line, char delim, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw MalformedInput("line " + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

}  // namespace

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  char delim = ',';
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!have_header) {
      if (line.find('\t') != std::string::npos && line.find(',') == std::string::npos) delim = '\t';
      t.header = split_record(line, delim, line_no);
      have_header = true;
      continue;
    }
    auto fields = split_record(line, delim, line_no);
    if (fields.size() != t.header.size()) {
      throw MalformedInput("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) {
    throw MalformedInput("input has no header row");
  }
  return t;
}

Table read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open '" + path + "'");
  }
  return read_table(in);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    if (s == "inf" || s == "+inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw MalformedInput("'" + s + "' is not a number");
  }
  return v;
}

LoadedData load_grouped(const Table& table, const DataSpec& spec) {
  auto find_col = [&](const std::string& name, const char* role) -> std::size_t {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw ConfigError(std::string(role) + " column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };
  if (spec.group_col.empty()) throw ConfigError("no group column given");
  const std::size_t gcol = find_col(spec.group_col, "group");
  std::optional<std::size_t> ycol;
  if (!spec.response_col.empty()) {
    const auto it = std::find(table.header.begin(), table.header.end(), spec.response_col);
    if (it != table.header.end()) {
      ycol = static_cast<std::size_t>(it - table.header.begin());
    } else if (!spec.response_optional) {
      throw ConfigError("response column '" + spec.response_col + "' not found in header");
    }
  } else if (!spec.response_optional) {
    throw ConfigError("no response column given");
  }

  std::vector<std::size_t> xcols;
  std::vector<std::string> names{kInterceptName};
  if (spec.covariates.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == gcol || (ycol && c == *ycol) || table.header[c] == spec.response_col) continue;
      xcols.push_back(c);
      names.push_back(table.header[c]);
    }
  } else {
    for (const auto& name : spec.covariates) {
      xcols.push_back(find_col(name, "covariate"));
      names.push_back(name);
    }
  }
  const std::size_t p = xcols.size() + 1;

  std::vector<int> random_idx;
  for (const auto& name : spec.random_cols) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw ConfigError("random-effect column '" + name + "' is not a covariate");
    }
    random_idx.push_back(static_cast<int>(it - names.begin()));
  }

  // Parse every row: (group, [y, x...]).
  std::map<std::string, std::vector<std::vector<double>>> by_group;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::vector<double> rec;
    rec.reserve(p);
    try {
      rec.push_back(ycol ? parse_double(row[*ycol]) : 0.0);
      for (std::size_t c : xcols) rec.push_back(parse_double(row[c]));
      rec.push_back(static_cast<double>(r));
    } catch (const MalformedInput& e) {
      throw MalformedInput("data row " + std::to_string(r + 1) + ": " + e.what());
    }
    for (double v : rec) {
      if (!std::isfinite(v)) {
        throw MalformedInput("data row " + std::to_string(r + 1) + ": non-finite value");
      }
    }
    by_group[row[gcol]].push_back(std::move(rec));
  }
  if (by_group.empty()) {
    throw MalformedInput("input has no data rows");
  }
  // Canonical order first, so that even the standardization sums do not
  // depend on the input row order.
  for (auto& [id, rows] : by_group) std::sort(rows.begin(), rows.end());

  LoadedData out;
  out.column_names = names;
  out.has_response = ycol.has_value();
  const std::size_t nx = xcols.size();
  if (spec.center && spec.scale) {
    if (spec.center->size() != nx || spec.scale->size() != nx) {
      throw ConfigError("stored standardization does not match the covariates");
    }
    out.center = *spec.center;
    out.scale = *spec.scale;
  } else {
    out.center.assign(nx, 0.0);
    out.scale.assign(nx, 1.0);
    if (spec.standardize) {
      std::size_t n = 0;
      std::vector<double> sum(nx, 0.0);
      for (const auto& [id, rows] : by_group) {
        for (const auto& rec : rows) {
          for (std::size_t c = 0; c < nx; ++c) sum[c] += rec[c + 1];
          ++n;
        }
      }
      for (std::size_t c = 0; c < nx; ++c) out.center[c] = sum[c] / static_cast<double>(n);
      std::vector<double> ss(nx, 0.0);
      for (const auto& [id, rows] : by_group) {
        for (const auto& rec : rows) {
          for (std::size_t c = 0; c < nx; ++c) {
            ss[c] += (rec[c + 1] - out.center[c]) * (rec[c + 1] - out.center[c]);
          }
        }
      }
      for (std::size_t c = 0; c < nx; ++c) {
        const double sd = n > 1 ? std::sqrt(ss[c] / static_cast<double>(n - 1)) : 0.0;
        out.scale[c] = sd > 0.0 ? sd : 1.0;
      }
    }
  }

  std::vector<Group> groups;
  for (auto& [id, rows] : by_group) {
    Group g;
    g.id = id;
    const auto n = static_cast<Index>(rows.size());
    g.y.resize(n);
    g.x.resize(n, static_cast<Index>(p));
    for (Index j = 0; j < n; ++j) {
      const auto& rec = rows[static_cast<std::size_t>(j)];
      g.y(j) = rec[0];
      g.x(j, 0) = 1.0;
      for (std::size_t c = 0; c < nx; ++c) {
        g.x(j, static_cast<Index>(c + 1)) = (rec[c + 1] - out.center[c]) / out.scale[c];
      }
      out.source_row.push_back(static_cast<std::size_t>(rec.back()));
    }
    groups.push_back(std::move(g));
  }
  out.data = GroupedDataset(std::move(groups), random_idx);
  return out;
}

}  // namespace penlmm
