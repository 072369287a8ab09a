#include "penlmm/artifact.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "penlmm/csv.hpp"
#include "penlmm/error.hpp"

namespace penlmm {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& xs, char sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    s += xs[i];
  }
  return s;
}

}  // namespace

void write_artifact(std::ostream& os, const ModelArtifact& a) {
  const FitResult& f = a.fit;
  const ParameterVector& phi = f.phi_hat;
  const Index p = phi.p();
  if (static_cast<Index>(a.column_names.size()) != p || f.weights.size() != p) {
    throw DimensionMismatch("artifact column names, weights and coefficients differ in length");
  }
  auto kv = [&](const std::string& k, const std::string& v) { os << k << '\t' << v << '\n'; };
  os << "penlmm-model\t" << kArtifactVersion << '\n';
  kv("group_col", a.group_col);
  kv("response_col", a.response_col);
  kv("random_cols", join(a.random_cols, ','));
  kv("psi_kind", to_string(phi.cov.kind()));
  kv("p", std::to_string(p));
  kv("q", std::to_string(phi.cov.q()));
  kv("lambda", format_double(f.lambda));
  kv("rho", format_double(phi.rho));
  kv("sigma2", format_double(phi.sigma2()));
  kv("objective", format_double(f.objective_value));
  kv("neg_loglik", format_double(f.neg_loglik));
  kv("bic", format_double(a.bic));
  kv("n_total", std::to_string(a.n_total));
  kv("num_groups", std::to_string(a.num_groups));
  kv("cycles", std::to_string(f.cycles_used));
  kv("converged", f.converged ? "1" : "0");
  kv("variance_frozen", f.variance_frozen ? "1" : "0");
  kv("armijo_failures", std::to_string(f.armijo_failures));
  kv("kkt_residual", format_double(f.kkt_residual));
  for (const auto& [k, v] : a.extra) kv("extra." + k, v);

  os << "[columns]\n";
  for (Index k = 0; k < p; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const double c = k == 0 ? 0.0 : a.center.at(kk - 1);
    const double s = k == 0 ? 1.0 : a.scale.at(kk - 1);
    os << a.column_names[kk] << '\t' << format_double(c) << '\t' << format_double(s) << '\t'
       << format_double(f.weights[k]) << '\n';
  }
  os << "[coefficients]\n";
  for (Index k = 0; k < p; ++k) {
    os << a.column_names[static_cast<std::size_t>(k)] << '\t' << format_double(phi.beta(k)) << '\t'
       << (phi.beta(k) != 0.0 ? 1 : 0) << '\n';
  }
  os << "[theta]\n";
  for (Index j = 0; j < phi.cov.num_params(); ++j) os << format_double(phi.cov.theta()(j)) << '\n';
  os << "[psi]\n";
  const Matrix psi = phi.cov.psi();
  for (Index r = 0; r < psi.rows(); ++r) {
    for (Index c = 0; c < psi.cols(); ++c) os << (c ? "\t" : "") << format_double(psi(r, c));
    os << '\n';
  }
  os << "[random_effects]\n";
  for (std::size_t i = 0; i < a.effects.group_ids.size(); ++i) {
    os << a.effects.group_ids[i];
    for (Index j = 0; j < a.effects.b[i].size(); ++j) os << '\t' << format_double(a.effects.b[i](j));
    os << '\n';
  }
  os << "[trace]\n";
  for (double v : f.objective_trace) os << format_double(v) << '\n';
  os << "[end]\n";
}

ModelArtifact read_artifact(std::istream& is) {
  ModelArtifact a;
  std::string line;
  if (!std::getline(is, line)) throw MalformedInput("empty model artifact");
  {
    const auto head = split_tabs(line);
    if (head.size() != 2 || head[0] != "penlmm-model") {
      throw MalformedInput("not a model artifact (bad first line)");
    }
    if (head[1] != std::to_string(kArtifactVersion)) {
      throw MalformedInput("unsupported artifact version '" + head[1] + "'");
    }
  }
  std::map<std::string, std::string> header;
  std::string section;
  std::vector<std::vector<std::string>> columns, coefficients, theta, effects, trace;
  bool ended = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      if (section == "[end]") {
        ended = true;
        break;
      }
      continue;
    }
    auto fields = split_tabs(line);
    if (section.empty()) {
      if (fields.size() != 2) throw MalformedInput("bad header line '" + line + "'");
      header[fields[0]] = fields[1];
    } else if (section == "[columns]") {
      columns.push_back(std::move(fields));
    } else if (section == "[coefficients]") {
      coefficients.push_back(std::move(fields));
    } else if (section == "[theta]") {
      theta.push_back(std::move(fields));
    } else if (section == "[random_effects]") {
      effects.push_back(std::move(fields));
    } else if (section == "[trace]") {
      trace.push_back(std::move(fields));
    }
  }
  if (!ended) throw MalformedInput("model artifact is truncated (no [end] marker)");

  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = header.find(k);
    if (it == header.end()) throw MalformedInput("model artifact lacks '" + k + "'");
    return it->second;
  };
  auto get_index = [&](const std::string& k) {
    const double v = parse_double(get(k));
    return static_cast<Index>(v);
  };

  a.group_col = get("group_col");
  a.response_col = get("response_col");
  a.random_cols = split_list(get("random_cols"));
  const CovarianceKind kind = covariance_kind_from_string(get("psi_kind"));
  const Index p = get_index("p");
  const Index q = get_index("q");
  for (const auto& [k, v] : header) {
    if (k.rfind("extra.", 0) == 0) a.extra[k.substr(6)] = v;
  }
  if (static_cast<Index>(columns.size()) != p || static_cast<Index>(coefficients.size()) != p) {
    throw MalformedInput("model artifact has inconsistent column count");
  }
  Vector beta(p);
  Vector weights(p);
  for (Index k = 0; k < p; ++k) {
    const auto& c = columns[static_cast<std::size_t>(k)];
    const auto& b = coefficients[static_cast<std::size_t>(k)];
    if (c.size() != 4 || b.size() != 3) throw MalformedInput("bad column or coefficient line");
    a.column_names.push_back(c[0]);
    if (k > 0) {
      a.center.push_back(parse_double(c[1]));
      a.scale.push_back(parse_double(c[2]));
    }
    weights(k) = parse_double(c[3]);
    beta(k) = parse_double(b[1]);
  }
  Vector th(static_cast<Index>(theta.size()));
  for (std::size_t j = 0; j < theta.size(); ++j) th(static_cast<Index>(j)) = parse_double(theta[j].at(0));

  FitResult& f = a.fit;
  try {
    f.phi_hat = ParameterVector{beta, CovarianceStructure(kind, q, th), parse_double(get("rho"))};
  } catch (const DimensionMismatch& e) {
    throw MalformedInput(std::string("model artifact: ") + e.what());
  }
  f.weights = PenaltyWeights(weights);
  f.lambda = parse_double(get("lambda"));
  f.objective_value = parse_double(get("objective"));
  f.neg_loglik = parse_double(get("neg_loglik"));
  f.cycles_used = static_cast<int>(get_index("cycles"));
  f.converged = get("converged") == "1";
  f.variance_frozen = get("variance_frozen") == "1";
  f.armijo_failures = static_cast<int>(get_index("armijo_failures"));
  f.kkt_residual = parse_double(get("kkt_residual"));
  for (Index k = 0; k < p; ++k) {
    if (beta(k) != 0.0) f.active_set.push_back(k);
  }
  for (const auto& t : trace) f.objective_trace.push_back(parse_double(t.at(0)));
  a.bic = parse_double(get("bic"));
  a.n_total = get_index("n_total");
  a.num_groups = get_index("num_groups");

  for (const auto& e : effects) {
    if (static_cast<Index>(e.size()) != q + 1) {
      throw MalformedInput("random-effect line for '" + e.at(0) + "' has the wrong length");
    }
    Vector b(q);
    for (Index j = 0; j < q; ++j) b(j) = parse_double(e[static_cast<std::size_t>(j + 1)]);
    a.effects.group_ids.push_back(e[0]);
    a.effects.b.push_back(std::move(b));
  }
  return a;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw ConfigError("cannot move output into place at '" + path + "'");
  }
}

}  // namespace penlmm
