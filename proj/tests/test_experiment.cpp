#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>

#include "mmb/experiment.hpp"

using namespace mmb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_synth(const std::string& kind, const std::string& dir) {
  auto c = ExperimentConfig::from_json_string(
      R"({"kind":")" + kind + R"(",
          "problem":{"blocks":3,"d_x":4,"d_y":3,"sigma":0.1},
          "run":{"eta0":0.05,"beta0":0.2,"horizon":300,"seed":7},
          "record_every":20})");
  c.out_dir = dir;
  return c;
}

struct ScratchDir {
  std::string path;
  explicit ScratchDir(std::string p) : path(std::move(p)) {
    fs::remove_all(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("a synthetic run writes a trace and a summary where it says") {
  ScratchDir dir("exp_scratch_synth");
  const auto cfg = small_synth("synthetic-v1", dir.path);
  const auto s = run_experiment(cfg);

  CHECK(s.kind == "synthetic-v1");
  CHECK(s.seed == 7);
  CHECK(s.fingerprint == cfg.fingerprint());
  CHECK(!s.diverged);
  CHECK(s.completed_iters == 300);
  CHECK(fs::exists(s.trace_path));
  CHECK(fs::exists(s.summary_path));
  CHECK(s.trace_path == dir.path + "/trace_" + s.fingerprint + ".csv");
  CHECK(s.summary_path == dir.path + "/summary_" + s.fingerprint + ".json");

  // the report iterate is drawn inside the horizon and the stationarity
  // scan found values there and at the end
  CHECK(s.tau >= 0);
  CHECK(s.tau < 300);
  CHECK(std::isfinite(s.stationarity_at_tau));
  CHECK(std::isfinite(s.final_stationarity));
  CHECK(std::isfinite(s.running_min_stationarity));
  CHECK(s.running_min_stationarity <= s.stationarity_at_tau);
  CHECK(s.running_min_stationarity <= s.final_stationarity);
  CHECK(std::isnan(s.final_metric));

  // trace has the fixed header and a row for the drawn iterate
  const std::string trace = slurp(s.trace_path);
  CHECK(trace.rfind("iter,F,grad_norm_sq,est_gap_sq,delta_y,delta_alpha,"
                    "delta_h_or_v,elapsed_ms\n", 0) == 0);
  CHECK(trace.find("\n" + std::to_string(s.tau) + ",") != std::string::npos);

  // summary parses back and embeds the full config
  const auto j = nlohmann::json::parse(slurp(s.summary_path));
  CHECK(j.at("fingerprint").get<std::string>() == s.fingerprint);
  CHECK(j.at("kind").get<std::string>() == "synthetic-v1");
  CHECK(j.at("tau").get<long>() == s.tau);
  CHECK(j.at("final_metric").is_null());
  CHECK(j.at("threshold").get<double>() == cfg.threshold);
  const auto embedded = ExperimentConfig::from_json_string(j.at("config").dump());
  CHECK(embedded.fingerprint() == cfg.fingerprint());
}

TEST_CASE("threshold crossing is reported off the recorded trace") {
  ScratchDir dir("exp_scratch_thresh");
  auto cfg = small_synth("synthetic-v2", dir.path);

  cfg.threshold = 1e6;  // every recorded iterate qualifies
  auto s = run_experiment(cfg);
  CHECK(s.iterations_to_threshold == 0);

  cfg.threshold = 1e-30;  // unreachable
  s = run_experiment(cfg);
  CHECK(s.iterations_to_threshold == -1);
}

TEST_CASE("equal configs give byte-identical traces across runs") {
  ScratchDir dir("exp_scratch_repeat");
  const auto cfg = small_synth("synthetic-v1", dir.path);
  const auto s1 = run_experiment(cfg);
  const std::string first = slurp(s1.trace_path);
  const auto s2 = run_experiment(cfg);
  CHECK(slurp(s2.trace_path) == first);
  CHECK(s1.trace_path == s2.trace_path);
}

TEST_CASE("an application run reports a metric instead of stationarity") {
  ScratchDir dir("exp_scratch_app");
  auto cfg = ExperimentConfig::from_json_string(
      R"({"kind":"auc-ct",
          "data":{"generate":{"tasks":2,"n":60,"dim":6,"pos_frac":0.2}},
          "run":{"horizon":200,"data_batch":16,"block_batch":2,"seed":3},
          "record_every":20})");
  cfg.out_dir = dir.path;
  const auto s = run_experiment(cfg);
  CHECK(!s.diverged);
  CHECK(s.final_metric >= 0.0);
  CHECK(s.final_metric <= 1.0);
  CHECK(std::isnan(s.stationarity_at_tau));
  CHECK(std::isnan(s.final_stationarity));
  CHECK(s.iterations_to_threshold == -1);
  const auto j = nlohmann::json::parse(slurp(s.summary_path));
  CHECK(j.at("final_stationarity").is_null());
  CHECK(j.at("final_metric").get<double>() == doctest::Approx(s.final_metric));
}

TEST_CASE("a sweep runs the full product of axes and aggregates per cell") {
  ScratchDir dir("exp_scratch_sweep");
  auto cfg = ExperimentConfig::from_json_string(
      R"({"kind":"synthetic-v2",
          "problem":{"blocks":3,"d_x":4,"d_y":3,"sigma":0.1},
          "run":{"eta0":0.05,"beta0":0.2,"horizon":120,"seed":1},
          "record_every":10,
          "threshold":1e6,
          "sweep":{"block_batch":[1,3],"data_batch":[1,2],"seeds":[1,2]}})");
  cfg.out_dir = dir.path;
  const auto r = run_sweep(cfg);

  CHECK(r.runs.size() == 8);
  CHECK(r.cells.size() == 4);
  for (const auto& cell : r.cells) {
    CHECK(cell.n_runs == 2);
    CHECK(cell.n_failed == 0);
    // every recorded iterate clears a 1e6 threshold, so the first one wins
    CHECK(cell.mean_iterations == 0.0);
    CHECK(cell.std_iterations == 0.0);
  }
  // each run got its own files, distinguished by fingerprint
  std::set<std::string> traces;
  for (const auto& run : r.runs) {
    CHECK(fs::exists(run.trace_path));
    traces.insert(run.trace_path);
  }
  CHECK(traces.size() == 8);

  const std::string table = slurp(r.table_path);
  CHECK(table.rfind("block_batch,data_batch,seed,diverged,"
                    "iterations_to_threshold,final_stationarity\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 9);
  const std::string summary = slurp(r.summary_path);
  CHECK(summary.rfind("block_batch,data_batch,n_runs,n_failed,"
                      "mean_iterations_to_threshold,"
                      "std_iterations_to_threshold\n", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
}

TEST_CASE("the built-in self checks all pass") {
  const auto items = verify_all();
  CHECK(items.size() == 7);
  for (const auto& item : items) {
    INFO(item.name, ": ", item.detail);
    CHECK(item.pass);
  }
}
