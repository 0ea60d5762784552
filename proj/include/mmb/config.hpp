#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmb/auc.hpp"
#include "mmb/optimizer.hpp"
#include "mmb/pauc.hpp"
#include "mmb/problem.hpp"

namespace mmb {

/// How an application experiment gets its task data. Exactly one source is
/// set: explicit per-task files, one combined file with a task column, or
/// the built-in separable generator.
struct DataSpec {
  std::vector<std::string> task_files;
  std::string single_file;
  bool generate = false;
  std::uint64_t gen_seed = 1;
  int gen_tasks = 2;
  int gen_n = 500;
  int gen_dim = 10;
  double gen_pos_frac = 0.1;
  double gen_margin = 1.0;
  void validate() const;
};

struct SweepSpec {
  std::vector<int> block_batch{1};
  std::vector<int> data_batch{1};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

/// Full experiment description. Parsed strictly: unknown keys anywhere are
/// an error, reported with their path. Serialization materializes every
/// default in a fixed field order, so serialize(parse(s)) is a fixpoint on
/// its own output.
struct ExperimentConfig {
  std::string kind;  // synthetic-v1 | synthetic-v2 | auc-ct | pauc

  // synthetic kinds
  std::uint64_t problem_seed = 1;
  ProblemDims dims{8, 10, 5, 1};
  SmoothnessProfile profile;
  double curvature_floor = 0.1;

  // application kinds
  DataSpec data;
  AucModelConfig model;
  PaucConfig pauc;

  RunConfig run;
  long record_every = 10;
  double threshold = 1e-2;  // stationarity level declared reached
  std::string out_dir = "out";
  SweepSpec sweep;

  bool is_synthetic() const;
  void validate() const;

  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  /// Canonical JSON with all defaults filled in.
  std::string to_json() const;
  /// FNV-1a of the canonical serialization, as 16 hex digits.
  std::string fingerprint() const;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace mmb
