#pragma once
// Experiment orchestration: configuration parsing (flat key=value or JSON),
// seeded replica execution with optional worker parallelism, and persistence
// of raw samples (CSV), a report with pass flags, and a manifest.
//
// Determinism contract: all per-replica randomness is keyed by (seed, kind
// tag, replica index), so raw outputs are byte-identical across reruns and
// across worker counts.  Long runs flush per replica and resume from an
// existing partial sample file when its header and config hash match.

#include <cstdint>
#include <string>
#include <vector>

namespace chaoslab::experiment {

inline constexpr const char* kVersion = "v1.0.0";

struct ExperimentConfig {
  std::string kind = "sample";  // sample|moments|tail|gumbel|sh-ratio|factor2|
                                // extremes|brw|spine|kahane|star-eq
  int d = 1;
  size_t cells_per_unit = 1024;  // grid cells per unit length
  size_t modes = 16384;          // circle modes (gumbel)
  double t_max = 4.0;
  double dt = 0.1;
  std::vector<double> gammas;  // defaults chosen per kind when empty
  double beta = 1.0;
  double q = 0.5;              // moment order
  size_t replicas = 100;
  uint64_t seed = 1;
  size_t workers = 1;
  std::string out_dir = ".";
  std::string backend = "auto";       // auto|cholesky|circulant
  std::string kernel = "wendland_c2"; // wendland_c2|triangular
  std::vector<double> t_list;         // extremes ladder
  std::vector<double> radii;          // moment-scaling box sides
  std::vector<double> thresholds;     // tail thresholds
  double t_coarse = 1.0;              // star-eq coarse cutoff
  double deep_t = 8.0;                // star-eq deep cutoff
  double shift_var = 0.25;            // kahane constant-shift variance
  size_t brw_n = 16;                  // brw generations
  size_t oracle_n = 10000;            // spine oracle draws

  // Canonical flat key=value serialization; parsing it back reproduces the
  // config bit-identically.
  std::string to_kv() const;
  // 64-bit hash of the canonical serialization minus execution-environment
  // fields (out_dir, workers), as hex; identifies the experiment.
  std::string config_hash() const;

  void validate() const;  // throws std::invalid_argument naming the field

  static ExperimentConfig parse_text(const std::string& text);  // kv or JSON
  static ExperimentConfig load_file(const std::string& path);
};

struct RunResult {
  bool pass = false;
  int exit_code = 1;  // 0 pass, 2 checks failed, 1 execution error
  std::string report_json;
};

// Executes the configured experiment, writing manifest.json, report.json and
// samples_*.csv into config.out_dir.  Exceptions propagate to the caller.
RunResult run_experiment(const ExperimentConfig& config);

}  // namespace chaoslab::experiment
