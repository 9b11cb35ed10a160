// Experiment orchestration: canonical config round-trips, validation
// messages, hashing, deterministic replica tables with resume, report and
// manifest contents, and the command-line driver's exit-code contract.
#include <doctest.h>

#include <chaoslab/experiment.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>

using namespace chaoslab;
using experiment::ExperimentConfig;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Self-cleaning scratch directory under the system temp root.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("chaoslab_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

size_t line_count(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// Small, fast paired-mass run used by the determinism and resume tests.
ExperimentConfig small_sh_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.kind = "sh-ratio";
  cfg.cells_per_unit = 32;
  cfg.t_max = 1.0;
  cfg.dt = 0.25;
  cfg.replicas = 120;
  cfg.seed = 42;
  cfg.out_dir = out_dir;
  return cfg;
}

// The CLI binary lives next to the test binary (same build tree); accept the
// common working directories so the test runs from the repo root or build/.
std::string cli_path() {
  for (const char* cand : {"./chaoslab", "build/chaoslab", "../build/chaoslab"})
    if (fs::exists(cand)) return cand;
  return "";
}

int run_cli(const std::string& args) {
  const std::string bin = cli_path();
  REQUIRE(!bin.empty());
  const int status = std::system((bin + " " + args).c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("experiment: canonical serialization round-trips") {
  ExperimentConfig cfg;
  cfg.kind = "moments";
  cfg.d = 2;
  cfg.cells_per_unit = 48;
  cfg.modes = 1024;
  cfg.t_max = 3.5;
  cfg.dt = 0.05;
  cfg.gammas = {0.3, 0.8};
  cfg.beta = 1.25;
  cfg.q = 0.35;
  cfg.replicas = 17;
  cfg.seed = 987654321;
  cfg.workers = 3;
  cfg.out_dir = "scratch/run1";
  cfg.backend = "cholesky";
  cfg.kernel = "triangular";
  cfg.t_list = {2.0, 4.0, 6.0};
  cfg.radii = {0.1, 0.2};
  cfg.thresholds = {1.0, 2.0, 4.0};
  cfg.t_coarse = 0.75;
  cfg.deep_t = 5.0;
  cfg.shift_var = 0.4;
  cfg.brw_n = 9;
  cfg.oracle_n = 2222;

  const std::string kv = cfg.to_kv();
  const ExperimentConfig back = ExperimentConfig::parse_text(kv);
  CHECK(back.to_kv() == kv);

  // the same settings given as JSON produce the identical canonical form
  json j{{"kind", "moments"},
         {"d", 2},
         {"cells_per_unit", 48},
         {"modes", 1024},
         {"t_max", 3.5},
         {"dt", 0.05},
         {"gammas", {0.3, 0.8}},
         {"beta", 1.25},
         {"q", 0.35},
         {"replicas", 17},
         {"seed", 987654321},
         {"workers", 3},
         {"out_dir", "scratch/run1"},
         {"backend", "cholesky"},
         {"kernel", "triangular"},
         {"t_list", {2.0, 4.0, 6.0}},
         {"radii", {0.1, 0.2}},
         {"thresholds", {1.0, 2.0, 4.0}},
         {"t_coarse", 0.75},
         {"deep_t", 5.0},
         {"shift_var", 0.4},
         {"brw_n", 9},
         {"oracle_n", 2222}};
  CHECK(ExperimentConfig::parse_text(j.dump()).to_kv() == kv);

  // defaults survive an empty round trip too
  const ExperimentConfig def;
  CHECK(ExperimentConfig::parse_text(def.to_kv()).to_kv() == def.to_kv());
}

TEST_CASE("experiment: key=value parsing handles comments and rejects typos") {
  const ExperimentConfig cfg = ExperimentConfig::parse_text(
      "# a comment line\n"
      "kind = gumbel   # trailing comment\n"
      "\n"
      "  modes =  512\n"
      "gammas = 0.5, 1.0 ,1.5\n"
      "seed=9\n");
  CHECK(cfg.kind == "gumbel");
  CHECK(cfg.modes == 512);
  CHECK(cfg.seed == 9);
  REQUIRE(cfg.gammas.size() == 3);
  CHECK(cfg.gammas[1] == 1.0);

  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("cellz=4\n"),
                       "unknown config key 'cellz'", std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("kind\n"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("dt=fast\n"),
                       "config field 'dt': expected a number, got 'fast'",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("seed=-3\n"),
                       "config field 'seed': expected a non-negative integer, got '-3'",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("radii=1,,2\n"),
                       "config field 'radii': empty list entry", std::invalid_argument);

  // JSON variants of the same errors
  CHECK_THROWS_AS(ExperimentConfig::parse_text("{ not json"), std::invalid_argument);
  // only brace-led text is treated as JSON; anything else follows the kv path
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("[1, 2]"),
                       "config line 1: expected key=value", std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("{\"dt\": {\"nested\": 1}}"),
                  std::invalid_argument);
  // booleans coerce to 0/1 for integer fields
  CHECK(ExperimentConfig::parse_text("{\"workers\": true}").workers == 1);
}

TEST_CASE("experiment: validation names the offending field") {
  const auto valid = [] {
    ExperimentConfig c;
    c.replicas = 10;
    return c;
  };
  CHECK_NOTHROW(valid().validate());

  auto c = valid();
  c.kind = "banana";
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'kind': unknown experiment kind 'banana'",
                       std::invalid_argument);
  c = valid();
  c.d = 3;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'd': must be 1 or 2",
                       std::invalid_argument);
  c = valid();
  c.cells_per_unit = 1;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'cells_per_unit': must be >= 2",
                       std::invalid_argument);
  c = valid();
  c.dt = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'dt': must be > 0", std::invalid_argument);
  c = valid();
  c.t_max = -1.0;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 't_max': must be >= 0",
                       std::invalid_argument);
  c = valid();
  c.replicas = 1;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'replicas': must be >= 2",
                       std::invalid_argument);
  c = valid();
  c.workers = 0;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'workers': must be >= 1",
                       std::invalid_argument);
  c = valid();
  c.backend = "gpu";
  CHECK_THROWS_WITH_AS(c.validate(),
                       "config field 'backend': must be auto, cholesky or circulant",
                       std::invalid_argument);
  c = valid();
  c.kernel = "cosine";
  CHECK_THROWS_WITH_AS(c.validate(),
                       "config field 'kernel': must be wendland_c2 or triangular",
                       std::invalid_argument);
  c = valid();
  c.gammas = {0.5, -0.1};
  CHECK_THROWS_WITH_AS(c.validate(),
                       "config field 'gammas': entries must be finite and >= 0",
                       std::invalid_argument);
  c = valid();
  c.q = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.beta = -0.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.deep_t = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.shift_var = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.oracle_n = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.modes = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = valid();
  c.brw_n = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  // per-kind constraints
  c = valid();
  c.kind = "tail";
  c.replicas = 500;
  CHECK_THROWS_WITH_AS(c.validate(),
                       "config field 'replicas': tail estimation needs >= 10000 samples",
                       std::invalid_argument);
  c = valid();
  c.kind = "brw";
  c.d = 2;
  c.brw_n = 13;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'brw_n': d * brw_n must be <= 24",
                       std::invalid_argument);
  c = valid();
  c.kind = "star-eq";
  c.d = 2;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'd': star-eq supports d = 1 only",
                       std::invalid_argument);
  c = valid();
  c.kind = "spine";
  c.beta = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), "config field 'beta': spine needs beta > 0",
                       std::invalid_argument);
}

TEST_CASE("experiment: config hash ignores execution environment only") {
  ExperimentConfig a;
  a.seed = 11;
  ExperimentConfig b = a;
  b.out_dir = "/somewhere/else";
  b.workers = 8;
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.config_hash().size() == 16);

  ExperimentConfig c = a;
  c.seed = 12;
  CHECK(c.config_hash() != a.config_hash());
  ExperimentConfig d = a;
  d.replicas += 1;
  CHECK(d.config_hash() != a.config_hash());
  ExperimentConfig e = a;
  e.gammas = {0.9};
  CHECK(e.config_hash() != a.config_hash());
}

TEST_CASE("experiment: sample run writes report, manifest and samples") {
  TempDir dir("sample");
  ExperimentConfig cfg;
  cfg.kind = "sample";
  cfg.cells_per_unit = 32;
  cfg.t_max = 1.0;
  cfg.dt = 0.5;
  cfg.replicas = 4;
  cfg.seed = 7;
  cfg.out_dir = dir.str();

  const auto result = experiment::run_experiment(cfg);
  CHECK(result.pass);
  CHECK(result.exit_code == 0);

  const json report = json::parse(read_file(dir.path / "report.json"));
  CHECK(report.at("version") == experiment::kVersion);
  CHECK(report.at("kind") == "sample");
  CHECK(report.at("seed") == 7);
  CHECK(report.at("replicas") == 4);
  CHECK(report.at("config_hash") == cfg.config_hash());
  CHECK(report.at("pass") == true);
  CHECK(report.at("details").at("gamma") == 0.0);
  REQUIRE(report.at("checks").is_array());
  REQUIRE(report.at("checks").size() == 1);
  const json& check = report.at("checks").at(0);
  CHECK(check.at("name") == "unit_mean_mass");
  CHECK(check.at("tolerance_kind") == "harness");
  CHECK(check.at("pass") == true);
  // gamma defaults to 0 for plain sampling, so every mass is exactly 1
  CHECK(check.at("observed") == doctest::Approx(1.0).epsilon(1e-12));

  const json manifest = json::parse(read_file(dir.path / "manifest.json"));
  CHECK(manifest.at("config_hash") == cfg.config_hash());
  CHECK(manifest.at("workers") == 1);
  CHECK(manifest.at("wall_time_seconds").get<double>() >= 0.0);
  CHECK(ExperimentConfig::parse_text(manifest.at("config").get<std::string>()).to_kv() ==
        cfg.to_kv());

  const std::string csv = read_file(dir.path / "samples_field.csv");
  CHECK(csv.rfind("replica,cell,value\n", 0) == 0);
  CHECK(line_count(csv) == 1 + 4 * 32);
}

TEST_CASE("experiment: outputs are byte-identical across worker counts") {
  TempDir da("workers1"), db("workers2");
  ExperimentConfig a = small_sh_config(da.str());
  ExperimentConfig b = small_sh_config(db.str());
  b.workers = 2;

  experiment::run_experiment(a);
  experiment::run_experiment(b);

  CHECK(read_file(da.path / "samples_sh_ratio.csv") ==
        read_file(db.path / "samples_sh_ratio.csv"));
  // the report carries no execution-environment fields, so it matches too
  CHECK(read_file(da.path / "report.json") == read_file(db.path / "report.json"));
  // manifests differ in the worker count by design
  const json ma = json::parse(read_file(da.path / "manifest.json"));
  const json mb = json::parse(read_file(db.path / "manifest.json"));
  CHECK(ma.at("workers") == 1);
  CHECK(mb.at("workers") == 2);
  CHECK(ma.at("config_hash") == mb.at("config_hash"));
}

TEST_CASE("experiment: replica tables resume from a matching partial file") {
  TempDir ref_dir("resume_ref"), dir("resume");
  experiment::run_experiment(small_sh_config(ref_dir.str()));
  const std::string full = read_file(ref_dir.path / "samples_sh_ratio.csv");

  experiment::run_experiment(small_sh_config(dir.str()));
  const fs::path csv_path = dir.path / "samples_sh_ratio.csv";
  REQUIRE(read_file(csv_path) == full);

  // keep the header plus 13 rows, then append a malformed line; the rerun
  // must keep the valid prefix, drop the garbage and regenerate the rest
  {
    std::istringstream in(read_file(csv_path));
    std::string line, kept;
    for (size_t i = 0; i < 14 && std::getline(in, line); ++i) kept += line + "\n";
    kept += "this,is,not/a,row\n";
    write_file(csv_path, kept);
  }
  experiment::run_experiment(small_sh_config(dir.str()));
  CHECK(read_file(csv_path) == full);

  // a stale config stamp forces a fresh start instead of trusting the file
  write_file(csv_path, "replica,sh_mass,derivative_mass\n0,999,999\n");
  write_file(dir.path / "samples_sh_ratio.csv.meta", "deadbeef\n");
  experiment::run_experiment(small_sh_config(dir.str()));
  CHECK(read_file(csv_path) == full);

  // a header mismatch is also rejected even when the stamp matches
  const std::string stamp = read_file(dir.path / "samples_sh_ratio.csv.meta");
  write_file(csv_path, "replica,wrong,header\n0,999,999\n");
  write_file(dir.path / "samples_sh_ratio.csv.meta", stamp);
  experiment::run_experiment(small_sh_config(dir.str()));
  CHECK(read_file(csv_path) == full);
}

TEST_CASE("experiment: command line driver honors the exit code contract") {
  TempDir dir("cli");

  // passing run: exit 0 and a report on stdout
  write_file(dir.path / "ok.kv",
             "cells_per_unit=32\nt_max=1\ndt=0.5\nreplicas=4\nseed=7\n");
  const std::string out0 = (dir.path / "out0").string();
  CHECK(run_cli("sample --config " + (dir.path / "ok.kv").string() + " --out " + out0 +
                " > /dev/null 2>&1") == 0);
  CHECK(fs::exists(fs::path(out0) / "report.json"));

  // seed and workers overrides land in the outputs
  const std::string out1 = (dir.path / "out1").string();
  CHECK(run_cli("sample --config " + (dir.path / "ok.kv").string() + " --seed 5 --workers 2 --out " +
                out1 + " > /dev/null 2>&1") == 0);
  const json rep = json::parse(read_file(fs::path(out1) / "report.json"));
  CHECK(rep.at("seed") == 5);
  const json man = json::parse(read_file(fs::path(out1) / "manifest.json"));
  CHECK(man.at("workers") == 2);

  // execution errors: missing config file, unknown key, invalid field
  CHECK(run_cli("sample --config " + (dir.path / "missing.kv").string() +
                " > /dev/null 2>&1") == 1);
  write_file(dir.path / "typo.kv", "cellz=4\n");
  CHECK(run_cli("sample --config " + (dir.path / "typo.kv").string() + " > /dev/null 2>&1") ==
        1);
  write_file(dir.path / "bad.kv", "replicas=1\n");
  CHECK(run_cli("sample --config " + (dir.path / "bad.kv").string() + " > /dev/null 2>&1") ==
        1);

  // failing checks: the circle-field law comparison misses its fixed bands,
  // which is exactly what exit code 2 is for
  write_file(dir.path / "fail.kv", "modes=64\nreplicas=1500\nseed=3\n");
  const std::string out2 = (dir.path / "out2").string();
  CHECK(run_cli("gumbel --config " + (dir.path / "fail.kv").string() + " --out " + out2 +
                " > /dev/null 2>&1") == 2);
  const json rep2 = json::parse(read_file(fs::path(out2) / "report.json"));
  CHECK(rep2.at("pass") == false);
}
