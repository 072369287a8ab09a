#include "penlmm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "penlmm/artifact.hpp"
#include "penlmm/csv.hpp"
#include "penlmm/error.hpp"
#include "penlmm/predict.hpp"
#include "penlmm/selection.hpp"
#include "penlmm/simulate.hpp"

namespace penlmm {

namespace {

struct Prepared {
  LoadedData loaded;
  PenaltyWeights weights;
  CovarianceKind kind = CovarianceKind::IdentityMultiple;
  SolverOptions solver;
  PathOptions path;
};

Prepared prepare(const FitConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no input data given (--data)");
  Prepared p;
  try {
    p.kind = covariance_kind_from_string(cfg.psi);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  DataSpec spec;
  spec.group_col = cfg.group_col;
  spec.response_col = cfg.response_col;
  spec.random_cols = cfg.random_cols;
  spec.standardize = cfg.standardize;
  p.loaded = load_grouped(read_table_file(cfg.data), spec);
  const GroupedDataset& data = p.loaded.data;

  std::vector<int> unpen{0};
  unpen.insert(unpen.end(), data.random_effect_columns().begin(),
               data.random_effect_columns().end());
  for (const auto& name : cfg.unpenalized) {
    const auto& names = p.loaded.column_names;
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("unpenalized column '" + name + "' is not a covariate");
    unpen.push_back(static_cast<int>(it - names.begin()));
  }
  p.weights = PenaltyWeights::with_unpenalized(data.p(), unpen);

  p.solver.max_cycles = cfg.max_cycles;
  p.solver.rel_obj_tol = cfg.rel_tol;
  p.solver.max_param_tol = cfg.param_tol;
  try {
    p.solver.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.grid < 2) throw ConfigError("--grid must be at least 2");
  if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) throw ConfigError("--ratio must lie in (0, 1)");
  if (cfg.folds < 2) throw ConfigError("--folds must be at least 2");
  p.path.grid_size = cfg.grid;
  p.path.ratio = cfg.ratio;
  p.path.cv_folds = static_cast<int>(std::min<Index>(cfg.folds, data.n_total()));
  return p;
}

ModelArtifact make_artifact(const FitConfig& cfg, const Prepared& p, const FitResult& fit) {
  ModelArtifact a;
  a.group_col = cfg.group_col;
  a.response_col = cfg.response_col;
  a.column_names = p.loaded.column_names;
  a.center = p.loaded.center;
  a.scale = p.loaded.scale;
  for (int c : p.loaded.data.random_effect_columns()) {
    a.random_cols.push_back(p.loaded.column_names[static_cast<std::size_t>(c)]);
  }
  a.fit = fit;
  a.bic = bic(fit, p.loaded.data);
  a.n_total = p.loaded.data.n_total();
  a.num_groups = p.loaded.data.num_groups();
  a.effects = predict_random_effects(fit.phi_hat, p.loaded.data);
  a.extra["standardize"] = cfg.standardize ? "on" : "off";
  a.extra["adaptive"] = cfg.adaptive ? "on" : "off";
  return a;
}

void save_artifact(const std::string& path, const ModelArtifact& a) {
  std::ostringstream os;
  write_artifact(os, a);
  write_file_atomic(path, os.str());
}

void print_summary(std::ostream& out, const ModelArtifact& a) {
  const FitResult& f = a.fit;
  out << "lambda      " << format_double(f.lambda) << "\n"
      << "sigma2      " << format_double(f.phi_hat.sigma2()) << "\n"
      << "-2 loglik   " << format_double(2.0 * f.neg_loglik) << "\n"
      << "BIC         " << format_double(a.bic) << "\n"
      << "converged   " << (f.converged ? "yes" : "no") << " (" << f.cycles_used
      << " cycles, KKT residual " << format_double(f.kkt_residual) << ")\n";
  const Matrix psi = f.phi_hat.cov.psi();
  out << "Psi (" << to_string(f.phi_hat.cov.kind()) << ") over";
  for (const auto& c : a.random_cols) out << " " << c;
  out << "\n";
  for (Index r = 0; r < psi.rows(); ++r) {
    out << " ";
    for (Index c = 0; c < psi.cols(); ++c) out << " " << format_double(psi(r, c));
    out << "\n";
  }
  out << "active coefficients (" << f.active_set.size() << "):\n";
  for (Index k : f.active_set) {
    out << "  " << a.column_names[static_cast<std::size_t>(k)] << " "
        << format_double(f.phi_hat.beta(k)) << (f.weights.unpenalized(k) ? "  (unpenalized)" : "")
        << "\n";
  }
}

ParameterVector starting_point(const Prepared& p) {
  const Vector beta0 = initial_lasso(p.loaded.data, p.weights, p.path.cv_folds);
  const InitialValues iv = initial_values(p.loaded.data, p.kind, beta0);
  return ParameterVector{iv.beta, iv.cov, iv.rho};
}

void write_path_table(std::ostream& os, const PathResult& path, const GroupedDataset& data) {
  os << "lambda\tactive_size\tneg2loglik\tdf\tbic\n";
  for (const auto& e : path.entries) {
    const Index dim_theta = e.fit.variance_frozen ? 0 : e.fit.phi_hat.cov.num_params();
    const auto s = static_cast<Index>(e.fit.active_set.size());
    os << format_double(e.lambda) << "\t" << s << "\t" << format_double(2.0 * e.fit.neg_loglik)
       << "\t" << s + dim_theta << "\t" << format_double(e.bic) << "\n";
  }
  (void)data;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    write_file_atomic(path, content);
  }
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MalformedInput& e) {
    err << "malformed input: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const DimensionMismatch& e) {
    err << "malformed input: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int cmd_fit(const FitConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!cfg.lambda) throw ConfigError("fit needs --lambda (use the path command for a grid)");
    if (!(*cfg.lambda >= 0.0)) throw ConfigError("--lambda must be nonnegative");
    const Prepared p = prepare(cfg);
    for (const auto& w : p.loaded.data.warnings()) err << "warning: " << w << "\n";
    FitResult f = fit(p.loaded.data, *cfg.lambda, p.weights, starting_point(p), p.solver);
    if (cfg.adaptive) {
      const PenaltyWeights w = adaptive_weights(f.phi_hat.beta, p.weights);
      f = fit(p.loaded.data, *cfg.lambda, w, f.phi_hat, p.solver);
    }
    const ModelArtifact a = make_artifact(cfg, p, f);
    if (!cfg.out.empty()) save_artifact(cfg.out, a);
    print_summary(out, a);
    if (!f.converged) {
      err << "solver did not converge within " << cfg.max_cycles << " cycles\n";
      return kExitNotConverged;
    }
    return kExitOk;
  });
}

int cmd_path(const FitConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Prepared p = prepare(cfg);
    for (const auto& w : p.loaded.data.warnings()) err << "warning: " << w << "\n";
    const GroupedDataset& data = p.loaded.data;
    const Vector beta0 = initial_lasso(data, p.weights, p.path.cv_folds);
    const PathResult first = lambda_path(data, p.kind, p.weights, p.solver, p.path, beta0);
    std::ostringstream table;
    if (cfg.adaptive) table << "# stage initial\n";
    write_path_table(table, first, data);
    FitResult chosen = first.best;
    for (const auto& f : first.failures) {
      err << "warning: fit at lambda " << format_double(f.lambda) << " failed: " << f.message << "\n";
    }
    if (cfg.adaptive) {
      const PenaltyWeights w = adaptive_weights(first.best.phi_hat.beta, p.weights);
      table << "# stage adaptive\n";
      if (w.num_penalized() > 0) {
        const PathResult second = lambda_path(data, p.kind, w, p.solver, p.path, beta0);
        write_path_table(table, second, data);
        chosen = second.best;
      } else {
        chosen = fit(data, 0.0, w, first.best.phi_hat, p.solver);
      }
    }
    emit(cfg.table, table.str(), out);
    const ModelArtifact a = make_artifact(cfg, p, chosen);
    if (!cfg.out.empty()) save_artifact(cfg.out, a);
    if (!cfg.table.empty()) print_summary(out, a);
    if (!chosen.converged) {
      err << "selected fit did not converge within " << cfg.max_cycles << " cycles\n";
      return kExitNotConverged;
    }
    return kExitOk;
  });
}

int cmd_predict(const PredictConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.model.empty() || cfg.data.empty()) throw ConfigError("predict needs --model and --data");
    std::istringstream is(read_file(cfg.model));
    const ModelArtifact a = read_artifact(is);
    DataSpec spec;
    spec.group_col = a.group_col;
    spec.response_col = a.response_col;
    spec.response_optional = true;
    spec.covariates.assign(a.column_names.begin() + 1, a.column_names.end());
    spec.random_cols = a.random_cols;
    spec.center = a.center;
    spec.scale = a.scale;
    const LoadedData nd = load_grouped(read_table_file(cfg.data), spec);
    const ResponsePrediction pred = predict_response(a.fit.phi_hat, a.effects, nd.data);

    const Index n = pred.y_hat.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(nd.source_row[static_cast<std::size_t>(i)])] = i;
    const Vector y = nd.data.stacked_y();
    std::ostringstream os;
    os << "row\tgroup\ty_hat\tknown_group" << (nd.has_response ? "\ty" : "") << "\n";
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto i = static_cast<std::size_t>(order[r]);
      os << r << "\t" << pred.group_ids[i] << "\t" << format_double(pred.y_hat(order[r])) << "\t"
         << (pred.known_group[i] ? 1 : 0);
      if (nd.has_response) os << "\t" << format_double(y(order[r]));
      os << "\n";
    }
    emit(cfg.out, os.str(), out);

    if (!cfg.effects_out.empty()) {
      std::ostringstream es;
      es << "group";
      for (const auto& c : a.random_cols) es << "\t" << c;
      es << "\n";
      for (std::size_t i = 0; i < a.effects.group_ids.size(); ++i) {
        es << a.effects.group_ids[i];
        for (Index j = 0; j < a.effects.b[i].size(); ++j) es << "\t" << format_double(a.effects.b[i](j));
        es << "\n";
      }
      write_file_atomic(cfg.effects_out, es.str());
    }
    std::size_t unknown = 0;
    for (bool k : pred.known_group) unknown += k ? 0 : 1;
    if (unknown > 0) {
      err << "note: " << unknown << " observations belong to groups not seen in training; "
          << "population-level predictions used\n";
    }
    if (nd.has_response && !cfg.out.empty()) {
      out << "mse\t" << format_double((y - pred.y_hat).squaredNorm() / static_cast<double>(n))
          << "\n";
    }
    return kExitOk;
  });
}

int cmd_simulate(const SimulateConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SimScheme scheme;
    if (!cfg.scheme_file.empty()) {
      if (!cfg.scheme.empty()) throw ConfigError("give either a scheme name or --scheme-file");
      if (cfg.theta2) throw ConfigError("--theta2 applies to named schemes only");
      scheme = scheme_from_json(read_file(cfg.scheme_file));
    } else {
      const auto names = scheme_names();
      if (std::find(names.begin(), names.end(), cfg.scheme) == names.end()) {
        throw ConfigError("unknown scheme '" + cfg.scheme + "'");
      }
      if (cfg.theta2 && !(*cfg.theta2 >= 0.0)) throw ConfigError("--theta2 must be nonnegative");
      scheme = scheme_preset(cfg.scheme, cfg.theta2);
    }
    if (cfg.runs) {
      if (*cfg.runs < 1) throw ConfigError("--runs must be at least 1");
      scheme.runs = *cfg.runs;
    }
    if (cfg.seed) scheme.seed = *cfg.seed;
    if (!cfg.write_scheme.empty()) write_file_atomic(cfg.write_scheme, scheme_to_json(scheme));

    RunOptions ro;
    if (!cfg.methods.empty()) {
      ro.methods.clear();
      for (const auto& m : cfg.methods) {
        try {
          ro.methods.push_back(method_from_string(m));
        } catch (const InvalidArgument& e) {
          throw ConfigError(e.what());
        }
      }
    }
    ro.workers = std::max(1, cfg.workers);
    const SchemeReport report = run_scheme(scheme, ro);

    std::string methods;
    for (Method m : ro.methods) methods += std::string(methods.empty() ? "" : ",") + to_string(m);
    std::ostringstream kind;
    kind << "scheme " << scheme.name << " N=" << scheme.N << " n=" << scheme.n << " p=" << scheme.p
         << " q=" << scheme.q << " fit=" << to_string(scheme.fit_kind) << "/" << scheme.fit_q
         << " sigma2=" << format_double(scheme.sigma2) << " rho=" << format_double(scheme.rho)
         << " test_n=" << scheme.test_n;
    std::ostringstream solver;
    solver << "solver max_cycles=" << ro.solver.max_cycles
           << " rel_tol=" << format_double(ro.solver.rel_obj_tol)
           << " param_tol=" << format_double(ro.solver.max_param_tol)
           << " kkt_tol=" << format_double(ro.solver.kkt_tol) << " grid=" << ro.path.grid_size
           << " ratio=" << format_double(ro.path.ratio) << " folds=" << ro.path.cv_folds;
    const std::vector<std::string> provenance{
        std::string("penlmm ") + kVersion + " simulate",
        kind.str(),
        "runs " + std::to_string(scheme.runs) + " seed " + std::to_string(scheme.seed),
        "methods " + methods,
        solver.str(),
        "eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
            "." + std::to_string(EIGEN_MINOR_VERSION)};
    std::ostringstream summary;
    write_summary_tsv(summary, report, provenance);
    emit(cfg.out, summary.str(), out);
    if (!cfg.runs_out.empty()) {
      std::ostringstream runs;
      write_runs_tsv(runs, report);
      write_file_atomic(cfg.runs_out, runs.str());
    }
    for (const auto& mr : report.methods) {
      for (const auto& msg : mr.failure_messages) {
        err << "warning: " << to_string(mr.method) << " " << msg << "\n";
      }
    }
    return kExitOk;
  });
}

int cmd_select_structure(const SelectConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!(cfg.kappa >= 0.0)) throw ConfigError("--kappa must be nonnegative");
    FitConfig fc = cfg.fit;
    fc.random_cols.clear();
    const Prepared p = prepare(fc);
    std::vector<int> unpen;
    for (Index k = 0; k < p.weights.size(); ++k) {
      if (p.weights.unpenalized(k)) unpen.push_back(static_cast<int>(k));
    }
    const auto& names = p.loaded.column_names;
    std::ostringstream os;
    try {
      const StructureSelection s =
          select_random_effects(p.loaded.data, unpen, cfg.kappa, cfg.max_candidates, p.solver,
                                p.path);
      os << "lasso_lambda\t" << format_double(s.lambda_lasso) << "\n";
      os << "bic0\t" << format_double(s.bic0) << "\n";
      os << "kappa\t" << format_double(s.kappa) << "\n";
      os << "candidate\ttheta2\tbic\tselected\n";
      for (std::size_t c = 0; c < s.candidate_set.size(); ++c) {
        const int col = s.candidate_set[c];
        const bool sel = std::find(s.selected.begin(), s.selected.end(), col) != s.selected.end();
        os << names[static_cast<std::size_t>(col)] << "\t"
           << format_double(s.theta_sq_by_candidate[c]) << "\t"
           << format_double(s.bic_by_candidate[c]) << "\t" << (sel ? 1 : 0) << "\n";
      }
      if (s.selected.empty()) {
        os << "no random effects selected\n";
      } else {
        os << "final\tvariance\n";
        for (std::size_t c = 0; c < s.final_columns.size(); ++c) {
          os << names[static_cast<std::size_t>(s.final_columns[c])] << "\t"
             << format_double(s.final_variances[c]) << "\n";
        }
        if (s.final_columns.empty()) os << "no random effects selected\n";
      }
    } catch (const EmptyCandidateSet&) {
      os << "candidate\ttheta2\tbic\tselected\n";
      os << "no random effects selected\n";
    }
    emit(cfg.out, os.str(), out);
    return kExitOk;
  });
}

int cmd_report(const std::string& summary_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::istringstream is(read_file(summary_path));
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto fields = split_list(line, '\t');
      if (header.empty()) {
        header = std::move(fields);
      } else {
        if (fields.size() != header.size()) throw MalformedInput("ragged summary table");
        rows.push_back(std::move(fields));
      }
    }
    if (header.size() < 2 || header[1] != "method") throw MalformedInput("not a summary table");
    std::vector<std::string> cols{"method"};
    std::vector<std::vector<std::string>> cells(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) cells[r].push_back(rows[r][1]);
    for (std::size_t c = 2; c < header.size(); ++c) {
      const std::string& h = header[c];
      if (h.size() > 5 && h.compare(h.size() - 5, 5, "_mean") == 0 && c + 1 < header.size()) {
        cols.push_back(h.substr(0, h.size() - 5));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          cells[r].push_back(rows[r][c] == "NA" ? "-" : rows[r][c] + " (" + rows[r][c + 1] + ")");
        }
        ++c;
      } else if (h == "runs" || h == "screening_rate" || h == "converged_rate") {
        cols.push_back(h);
        for (std::size_t r = 0; r < rows.size(); ++r) cells[r].push_back(rows[r][c]);
      }
    }
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      width[c] = cols[c].size();
      for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    for (std::size_t c = 0; c < cols.size(); ++c) out << std::left << std::setw(static_cast<int>(width[c] + 2)) << cols[c];
    out << "\n";
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < cols.size(); ++c) out << std::left << std::setw(static_cast<int>(width[c] + 2)) << row[c];
      out << "\n";
    }
    return kExitOk;
  });
}

namespace {

void add_fit_options(CLI::App* sub, FitConfig& c, std::string& standardize, bool with_lambda,
                     bool with_grid) {
  sub->add_option("--data", c.data, "input CSV with a header row")->required();
  sub->add_option("--group-col", c.group_col, "group id column")->capture_default_str();
  sub->add_option("--response-col", c.response_col, "response column")->capture_default_str();
  sub->add_option("--random-cols", c.random_cols,
                  "covariates with a random effect; (Intercept) for a random intercept")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--unpenalized", c.unpenalized, "covariates excluded from the penalty")
      ->delimiter(',');
  sub->add_option("--psi", c.psi, "random-effect covariance structure")
      ->check(CLI::IsMember({"identity", "diagonal", "general"}))
      ->capture_default_str();
  if (with_lambda) sub->add_option("--lambda", c.lambda, "penalty level");
  if (with_grid) {
    sub->add_option("--grid", c.grid, "number of lambda values")->capture_default_str();
    sub->add_option("--ratio", c.ratio, "smallest/largest lambda")->capture_default_str();
    sub->add_option("--table", c.table, "path table output (default stdout)");
  }
  sub->add_flag("--adaptive", c.adaptive, "second stage with weights 1/|beta|");
  sub->add_option("--standardize", standardize, "scale covariates to mean 0, variance 1")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  sub->add_option("--folds", c.folds, "folds for the initial cross-validated lasso")
      ->capture_default_str();
  sub->add_option("--max-cycles", c.max_cycles)->capture_default_str();
  sub->add_option("--rel-tol", c.rel_tol)->capture_default_str();
  sub->add_option("--param-tol", c.param_tol)->capture_default_str();
  sub->add_option("--out", c.out, "model artifact path");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lasso and adaptive lasso for linear mixed-effects models"};
  app.name(args.empty() ? "penlmm" : args[0]);
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitConfig fit_cfg;
  FitConfig path_cfg;
  SelectConfig sel_cfg;
  PredictConfig pred_cfg;
  SimulateConfig sim_cfg;
  std::string report_in;
  std::string fit_std = "on";
  std::string path_std = "on";
  std::string sel_std = "on";

  auto* fit_cmd = app.add_subcommand("fit", "fit at a single lambda");
  add_fit_options(fit_cmd, fit_cfg, fit_std, true, false);
  auto* path_cmd = app.add_subcommand("path", "fit a lambda grid and choose by BIC");
  add_fit_options(path_cmd, path_cfg, path_std, false, true);

  auto* pred_cmd = app.add_subcommand("predict", "predict responses from a model artifact");
  pred_cmd->add_option("--model", pred_cfg.model, "model artifact")->required();
  pred_cmd->add_option("--data", pred_cfg.data, "new data CSV")->required();
  pred_cmd->add_option("--out", pred_cfg.out, "predictions TSV (default stdout)");
  pred_cmd->add_option("--effects-out", pred_cfg.effects_out, "per-group random effects TSV");

  auto* sim_cmd = app.add_subcommand("simulate", "run a simulation scheme");
  sim_cmd->add_option("scheme", sim_cfg.scheme, "L1, L2, H1..H4, P1..P3");
  sim_cmd->add_option("--scheme-file", sim_cfg.scheme_file, "scheme definition (JSON)");
  sim_cmd->add_option("--runs", sim_cfg.runs);
  sim_cmd->add_option("--seed", sim_cfg.seed);
  sim_cmd->add_option("--theta2", sim_cfg.theta2, "random-effect variance for theta^2 I schemes");
  sim_cmd->add_option("--methods", sim_cfg.methods, "lmmLasso,lmmadLasso,Lasso,adLasso,cvLasso")
      ->delimiter(',');
  sim_cmd->add_option("--workers", sim_cfg.workers, "parallel runs")->capture_default_str();
  sim_cmd->add_option("--out", sim_cfg.out, "summary TSV (default stdout)");
  sim_cmd->add_option("--runs-out", sim_cfg.runs_out, "per-run TSV");
  sim_cmd->add_option("--write-scheme", sim_cfg.write_scheme, "write the scheme as JSON");

  auto* sel_cmd = app.add_subcommand("select-structure", "choose random-effect covariates");
  add_fit_options(sel_cmd, sel_cfg.fit, sel_std, false, true);
  sel_cmd->remove_option(sel_cmd->get_option("--random-cols"));
  sel_cmd->remove_option(sel_cmd->get_option("--out"));
  sel_cmd->remove_option(sel_cmd->get_option("--table"));
  sel_cmd->remove_option(sel_cmd->get_option("--adaptive"));
  sel_cmd->add_option("--kappa", sel_cfg.kappa, "variance threshold")->capture_default_str();
  sel_cmd->add_option("--max-candidates", sel_cfg.max_candidates, "0 for no limit")
      ->capture_default_str();
  sel_cmd->add_option("--out", sel_cfg.out, "report path (default stdout)");

  auto* rep_cmd = app.add_subcommand("report", "format a simulation summary table");
  rep_cmd->add_option("summary", report_in, "summary TSV from simulate")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }

  fit_cfg.standardize = fit_std == "on";
  path_cfg.standardize = path_std == "on";
  sel_cfg.fit.standardize = sel_std == "on";

  if (fit_cmd->parsed()) return cmd_fit(fit_cfg, out, err);
  if (path_cmd->parsed()) return cmd_path(path_cfg, out, err);
  if (pred_cmd->parsed()) return cmd_predict(pred_cfg, out, err);
  if (sim_cmd->parsed()) {
    if (sim_cfg.scheme.empty() && sim_cfg.scheme_file.empty()) {
      err << "configuration error: simulate needs a scheme name or --scheme-file\n";
      return kExitConfig;
    }
    return cmd_simulate(sim_cfg, out, err);
  }
  if (sel_cmd->parsed()) return cmd_select_structure(sel_cfg, out, err);
  if (rep_cmd->parsed()) return cmd_report(report_in, out, err);
  return kExitConfig;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace penlmm
