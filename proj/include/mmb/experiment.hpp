#pragma once

#include <string>
#include <vector>

#include "mmb/config.hpp"

namespace mmb {

/// Outcome of one experiment run. Stationarity fields are NaN for the
/// application kinds, the metric is NaN for the synthetic kinds.
struct RunSummary {
  std::string fingerprint;
  std::string kind;
  std::uint64_t seed = 0;
  bool diverged = false;
  long completed_iters = 0;
  double wall_ms = 0.0;
  long tau = -1;                         // uniformly drawn report iterate
  double stationarity_at_tau = 0.0;
  double running_min_stationarity = 0.0; // over recorded iterates
  double final_stationarity = 0.0;       // at the last recorded iterate
  long iterations_to_threshold = -1;     // first recorded iterate at or below
  double threshold = 0.0;
  double final_metric = 0.0;
  std::string trace_path;
  std::string summary_path;
};

/// Execute one run described by the config: build the problem or data, run
/// the matching loop, write the trace CSV (elapsed column zeroed so equal
/// configs give byte-identical files) and a summary JSON into out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
  int block_batch = 0;
  int data_batch = 0;
  int n_runs = 0;
  int n_failed = 0;  // diverged or never reached the threshold
  double mean_iterations = 0.0;  // over successful runs, NaN if none
  double std_iterations = 0.0;   // sample standard deviation
};

struct SweepResult {
  std::vector<RunSummary> runs;   // one per (block_batch, data_batch, seed)
  std::vector<SweepCell> cells;   // one per (block_batch, data_batch)
  std::string table_path;         // per-run rows
  std::string summary_path;       // per-cell aggregates
};

/// Cartesian product of the sweep axes crossed with the seed list; each run
/// writes its own trace and summary, then the two tables are written.
SweepResult run_sweep(const ExperimentConfig& cfg);

struct VerifyItem {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast self-checks of the library's core identities; every item should
/// pass on a healthy build.
std::vector<VerifyItem> verify_all();

}  // namespace mmb
