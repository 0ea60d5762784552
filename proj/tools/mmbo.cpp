#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <string>

#include "mmb/experiment.hpp"

namespace {

void apply_overrides(mmb::ExperimentConfig& cfg, const std::string& out_dir,
                     long long seed, long record_every) {
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed >= 0) cfg.run.seed = static_cast<std::uint64_t>(seed);
  if (record_every > 0) cfg.record_every = record_every;
}

void print_summary(const mmb::RunSummary& s) {
  std::printf("kind               %s\n", s.kind.c_str());
  std::printf("fingerprint        %s\n", s.fingerprint.c_str());
  std::printf("seed               %llu\n",
              static_cast<unsigned long long>(s.seed));
  std::printf("iterations         %ld%s\n", s.completed_iters,
              s.diverged ? "  (diverged)" : "");
  std::printf("wall time          %.1f ms\n", s.wall_ms);
  if (!std::isnan(s.running_min_stationarity)) {
    std::printf("tau                %ld\n", s.tau);
    std::printf("stationarity@tau   %.6g\n", s.stationarity_at_tau);
    std::printf("min stationarity   %.6g\n", s.running_min_stationarity);
    std::printf("final stationarity %.6g\n", s.final_stationarity);
    if (s.iterations_to_threshold >= 0)
      std::printf("reached %.3g at    iteration %ld\n", s.threshold,
                  s.iterations_to_threshold);
    else
      std::printf("threshold %.3g     not reached\n", s.threshold);
  }
  if (!std::isnan(s.final_metric))
    std::printf("final metric       %.6f\n", s.final_metric);
  std::printf("trace              %s\n", s.trace_path.c_str());
  std::printf("summary            %s\n", s.summary_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-loop solvers for multi-block min-max bilevel problems"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long seed = -1;
  long record_every = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("config", config_path, "experiment config (JSON)")
          ->required()
          ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory override");
    sub->add_option("--seed", seed, "run seed override");
    sub->add_option("--record-every", record_every,
                    "trace cadence override (iterations)");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "execute one experiment");
  add_common(cmd_run, true);
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "run the batch-size sweep in the config");
  add_common(cmd_sweep, true);
  CLI::App* cmd_verify =
      app.add_subcommand("verify", "run the library self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_verify->parsed()) {
      const auto items = mmb::verify_all();
      bool all = true;
      for (const auto& it : items) {
        std::printf("[%s] %-24s %s\n", it.pass ? "PASS" : "FAIL",
                    it.name.c_str(), it.detail.c_str());
        all = all && it.pass;
      }
      return all ? 0 : 1;
    }
    mmb::ExperimentConfig cfg =
        mmb::ExperimentConfig::from_json_file(config_path);
    apply_overrides(cfg, out_dir, seed, record_every);
    if (cmd_run->parsed()) {
      const mmb::RunSummary s = mmb::run_experiment(cfg);
      print_summary(s);
      return s.diverged ? 1 : 0;
    }
    const mmb::SweepResult res = mmb::run_sweep(cfg);
    std::printf("%zu runs over %zu cells\n", res.runs.size(), res.cells.size());
    for (const auto& c : res.cells)
      std::printf("  |I|=%d |B|=%-4d reached %d/%d  mean iters %.1f (sd %.1f)\n",
                  c.block_batch, c.data_batch, c.n_runs - c.n_failed, c.n_runs,
                  c.mean_iterations, c.std_iterations);
    std::printf("table   %s\nsummary %s\n", res.table_path.c_str(),
                res.summary_path.c_str());
    for (const auto& r : res.runs)
      if (r.diverged) return 1;
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
