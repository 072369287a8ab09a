#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "penlmm/artifact.hpp"
#include "penlmm/cli.hpp"
#include "penlmm/csv.hpp"
#include "penlmm/error.hpp"
#include "penlmm/simulate.hpp"

using namespace penlmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("penlmm_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Writes simulated P1 training data as CSV, rows in reverse order.
std::string write_p1_csv(const std::string& path, const GroupedDataset& d, bool reverse) {
  std::vector<std::string> lines;
  for (const auto& g : d.groups()) {
    for (Index r = 0; r < g.y.size(); ++r) {
      std::ostringstream os;
      os << g.id << "," << format_double(g.y(r));
      for (Index c = 1; c < g.x.cols(); ++c) os << "," << format_double(g.x(r, c));
      lines.push_back(os.str());
    }
  }
  if (reverse) std::reverse(lines.begin(), lines.end());
  std::ostringstream os;
  os << "group,y";
  for (Index c = 1; c < d.p(); ++c) os << ",x" << c;
  os << "\n";
  for (const auto& l : lines) os << l << "\n";
  spit(path, os.str());
  return path;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "penlmm");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  return code;
}

}  // namespace

TEST_CASE("delimited input parsing") {
  std::istringstream in("a\tb\n1\t\"x y\"\n\n2\t3\n");
  const Table t = read_table(in);
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x y");
  std::istringstream ragged("a,b\n1,2,3\n");
  CHECK_THROWS_AS(read_table(ragged), MalformedInput);
  CHECK_THROWS_AS(parse_double("1.5x"), MalformedInput);
  CHECK(parse_double(format_double(0.1 + 0.2)) == 0.1 + 0.2);
  CHECK(split_list("a, b,,c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("loading canonicalizes row order") {
  std::istringstream a("g,y,x\nb,1,2\na,3,4\na,0,1\n");
  std::istringstream b("g,y,x\na,0,1\nb,1,2\na,3,4\n");
  DataSpec spec;
  spec.group_col = "g";
  spec.response_col = "y";
  const LoadedData la = load_grouped(read_table(a), spec);
  const LoadedData lb = load_grouped(read_table(b), spec);
  CHECK((la.data.stacked_y() - lb.data.stacked_y()).norm() == 0.0);
  CHECK((la.data.stacked_x() - lb.data.stacked_x()).norm() == 0.0);
  CHECK(la.data.group(0).id == "a");
  CHECK(la.source_row == std::vector<std::size_t>{2, 1, 0});
  spec.response_col = "missing";
  std::istringstream c("g,y,x\na,0,1\n");
  CHECK_THROWS_AS(load_grouped(read_table(c), spec), ConfigError);
}

TEST_CASE("model artifact round trip is exact") {
  const SimScheme s = scheme_preset("L1");
  const auto sim = simulate_dataset(s, 5);
  const PenaltyWeights w = PenaltyWeights::defaults(sim.train);
  ParameterVector start{Vector::Zero(s.p),
                        CovarianceStructure::scaled_identity(s.fit_kind, s.fit_q, 0.5), 0.0};
  ModelArtifact a;
  a.group_col = "group";
  a.response_col = "y";
  a.column_names = {"(Intercept)"};
  for (Index c = 1; c < s.p; ++c) a.column_names.push_back("x" + std::to_string(c));
  a.center.assign(static_cast<std::size_t>(s.p - 1), 0.125);
  a.scale.assign(static_cast<std::size_t>(s.p - 1), 1.0 / 3.0);
  a.random_cols = {"(Intercept)", "x1", "x2"};
  a.fit = fit(sim.train, 2.0, w, start);
  a.bic = bic(a.fit, sim.train);
  a.n_total = sim.train.n_total();
  a.num_groups = sim.train.num_groups();
  a.effects = predict_random_effects(a.fit, sim.train);
  a.extra["note"] = "x";

  std::ostringstream os;
  write_artifact(os, a);
  std::istringstream is(os.str());
  const ModelArtifact b = read_artifact(is);
  CHECK(b.column_names == a.column_names);
  CHECK(b.center == a.center);
  CHECK(b.scale == a.scale);
  CHECK(b.random_cols == a.random_cols);
  CHECK((b.fit.phi_hat.beta - a.fit.phi_hat.beta).norm() == 0.0);
  CHECK((b.fit.phi_hat.cov.theta() - a.fit.phi_hat.cov.theta()).norm() == 0.0);
  CHECK(b.fit.phi_hat.rho == a.fit.phi_hat.rho);
  CHECK(b.fit.objective_trace == a.fit.objective_trace);
  CHECK(b.bic == a.bic);
  CHECK(b.effects.group_ids == a.effects.group_ids);
  CHECK(b.extra.at("note") == "x");
  std::ostringstream again;
  write_artifact(again, b);
  CHECK(again.str() == os.str());

  std::istringstream broken(os.str().substr(0, os.str().size() / 2));
  CHECK_THROWS_AS(read_artifact(broken), MalformedInput);
}

TEST_CASE("fit, path and predict from the command line") {
  TempDir tmp;
  const auto sim = simulate_dataset(scheme_preset("P1"), 17);
  const std::string csv = write_p1_csv(tmp / "train.csv", sim.train, false);
  const std::string csv_rev = write_p1_csv(tmp / "train_rev.csv", sim.train, true);

  CHECK(run({"fit", "--data", csv, "--lambda", "5", "--out", tmp / "m.txt"}) == kExitOk);
  CHECK(run({"fit", "--data", csv_rev, "--lambda", "5", "--out", tmp / "m_rev.txt"}) == kExitOk);
  // Input row order does not change the fit.
  CHECK(slurp(tmp / "m.txt") == slurp(tmp / "m_rev.txt"));

  CHECK(run({"path", "--data", csv, "--grid", "8", "--out", tmp / "p.txt", "--table",
             tmp / "table.tsv"}) == kExitOk);
  const std::string table = slurp(tmp / "table.tsv");
  CHECK(table.rfind("lambda\tactive_size\tneg2loglik\tdf\tbic", 0) == 0);
  CHECK(run({"path", "--data", csv, "--grid", "6", "--adaptive", "--out", tmp / "pa.txt"}) ==
        kExitOk);

  std::string pred;
  CHECK(run({"predict", "--model", tmp / "p.txt", "--data", csv_rev}, &pred) == kExitOk);
  std::istringstream lines(pred);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "row\tgroup\ty_hat\tknown_group\ty");
  std::size_t count = 0;
  for (std::string l; std::getline(lines, l);) ++count;
  CHECK(count == static_cast<std::size_t>(sim.train.n_total()));

  CHECK(run({"select-structure", "--data", csv, "--out",
             tmp / "sel.txt"}) == kExitOk);
  CHECK(!slurp(tmp / "sel.txt").empty());
}

TEST_CASE("exit codes") {
  TempDir tmp;
  const auto sim = simulate_dataset(scheme_preset("P1"), 18);
  const std::string csv = write_p1_csv(tmp / "train.csv", sim.train, false);

  CHECK(run({"fit", "--data", csv, "--lambda", "5", "--group-col", "nope"}) == kExitConfig);
  CHECK(run({"fit", "--data", tmp / "absent.csv", "--lambda", "5"}) == kExitConfig);
  CHECK(run({"fit", "--data", csv, "--lambda", "5", "--psi", "banded"}) == kExitConfig);
  CHECK(run({"fit", "--bogus"}) == kExitConfig);
  CHECK(run({"simulate", "Q7"}) == kExitConfig);

  spit(tmp / "bad.csv", "group,y,x1\na,1,2\na,zz,3\n");
  CHECK(run({"fit", "--data", tmp / "bad.csv", "--lambda", "1"}) == kExitMalformedInput);
  spit(tmp / "ragged.csv", "group,y,x1\na,1\n");
  CHECK(run({"fit", "--data", tmp / "ragged.csv", "--lambda", "1"}) == kExitMalformedInput);
  spit(tmp / "model.txt", "not a model\n");
  CHECK(run({"predict", "--model", tmp / "model.txt", "--data", csv}) == kExitMalformedInput);

  CHECK(run({"fit", "--data", csv, "--lambda", "0.5", "--max-cycles", "1", "--out",
             tmp / "nc.txt"}) == kExitNotConverged);
  CHECK(fs::exists(tmp / "nc.txt"));
  CHECK(run({"--version"}) == kExitOk);
}

TEST_CASE("simulate output is byte-identical across executions") {
  TempDir tmp;
  CHECK(run({"simulate", "L1", "--runs", "2", "--seed", "9", "--out", tmp / "a.tsv"}) == kExitOk);
  CHECK(run({"simulate", "L1", "--runs", "2", "--seed", "9", "--out", tmp / "b.tsv"}) == kExitOk);
  CHECK(slurp(tmp / "a.tsv") == slurp(tmp / "b.tsv"));
  CHECK(run({"simulate", "L1", "--runs", "2", "--seed", "9", "--workers", "2", "--out",
             tmp / "c.tsv"}) == kExitOk);
  CHECK(slurp(tmp / "a.tsv") == slurp(tmp / "c.tsv"));
  std::string rep;
  CHECK(run({"report", tmp / "a.tsv"}, &rep) == kExitOk);
  CHECK(rep.find("lmmLasso") != std::string::npos);
}
