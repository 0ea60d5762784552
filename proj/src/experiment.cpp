#include "mmb/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "mmb/dataset.hpp"
#include "mmb/hypergradient.hpp"

namespace mmb {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<TaskDataset> load_app_data(const ExperimentConfig& cfg) {
  if (!cfg.data.task_files.empty()) return load_task_files(cfg.data.task_files);
  if (!cfg.data.single_file.empty()) return load_single_file(cfg.data.single_file);
  return make_separable_tasks(cfg.data.gen_seed, cfg.data.gen_tasks,
                              cfg.data.gen_n, cfg.data.gen_dim,
                              cfg.data.gen_pos_frac, cfg.data.gen_margin);
}

void scan_stationarity(const std::vector<TraceRecord>& trace, double threshold,
                       long tau, RunSummary& sum) {
  sum.stationarity_at_tau = kNan;
  sum.running_min_stationarity = kNan;
  sum.final_stationarity = kNan;
  sum.iterations_to_threshold = -1;
  for (const auto& r : trace) {
    if (std::isnan(r.grad_norm_sq)) continue;
    if (std::isnan(sum.running_min_stationarity) ||
        r.grad_norm_sq < sum.running_min_stationarity)
      sum.running_min_stationarity = r.grad_norm_sq;
    sum.final_stationarity = r.grad_norm_sq;
    if (r.iter == tau) sum.stationarity_at_tau = r.grad_norm_sq;
    if (sum.iterations_to_threshold < 0 && r.grad_norm_sq <= threshold)
      sum.iterations_to_threshold = r.iter;
  }
}

void write_summary_json(const RunSummary& sum, const ExperimentConfig& cfg) {
  ordered_json j;
  j["fingerprint"] = sum.fingerprint;
  j["kind"] = sum.kind;
  j["seed"] = sum.seed;
  j["diverged"] = sum.diverged;
  j["completed_iters"] = sum.completed_iters;
  j["wall_ms"] = sum.wall_ms;
  j["tau"] = sum.tau;
  j["stationarity_at_tau"] = sum.stationarity_at_tau;
  j["running_min_stationarity"] = sum.running_min_stationarity;
  j["final_stationarity"] = sum.final_stationarity;
  j["iterations_to_threshold"] = sum.iterations_to_threshold;
  j["threshold"] = sum.threshold;
  j["final_metric"] = sum.final_metric;
  j["trace_file"] = sum.trace_path;
  j["config"] = ordered_json::parse(cfg.to_json());
  std::ofstream out(sum.summary_path);
  if (!out) throw std::runtime_error("cannot write " + sum.summary_path);
  out << j.dump(2) << "\n";
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string fp = cfg.fingerprint();
  RunSummary sum;
  sum.fingerprint = fp;
  sum.kind = cfg.kind;
  sum.seed = cfg.run.seed;
  sum.threshold = cfg.threshold;
  sum.final_metric = kNan;
  sum.trace_path = cfg.out_dir + "/trace_" + fp + ".csv";
  sum.summary_path = cfg.out_dir + "/summary_" + fp + ".json";

  if (cfg.run.horizon > 0) {
    RngStream r = RngStream(cfg.run.seed).fork(stream_label::tau_draw);
    sum.tau = static_cast<long>(
        r.below(static_cast<std::uint64_t>(cfg.run.horizon)));
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TraceRecord> trace;
  if (cfg.is_synthetic()) {
    const SyntheticQuadraticProblem problem = synth_generate(
        cfg.problem_seed, cfg.dims, cfg.profile, cfg.curvature_floor);
    RunOptions opts;
    opts.record_every = cfg.record_every;
    if (sum.tau >= 0) opts.extra_record_iters = {sum.tau};
    const Variant variant =
        cfg.kind == "synthetic-v1" ? Variant::v1 : Variant::v2;
    RunResult rr = run(problem, cfg.run, variant, opts);
    trace = std::move(rr.trace);
    sum.diverged = rr.diverged;
    sum.completed_iters = rr.completed_iters;
    scan_stationarity(trace, cfg.threshold, sum.tau, sum);
  } else {
    const std::vector<TaskDataset> data = load_app_data(cfg);
    RunOptions opts;
    opts.record_every = cfg.record_every;
    AppRunResult ar;
    if (cfg.kind == "auc-ct")
      ar = run_auc_ct(data, cfg.model, cfg.run, opts);
    else
      ar = run_pauc(data, cfg.model, cfg.pauc, cfg.run, opts);
    trace = std::move(ar.trace);
    sum.diverged = ar.diverged;
    sum.completed_iters = ar.completed_iters;
    sum.final_metric = ar.final_metric;
    sum.stationarity_at_tau = kNan;
    sum.running_min_stationarity = kNan;
    sum.final_stationarity = kNan;
  }
  sum.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  write_trace_csv(sum.trace_path, trace, /*zero_elapsed=*/true);
  write_summary_json(sum, cfg);
  return sum;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string fp = cfg.fingerprint();
  SweepResult res;
  for (int bb : cfg.sweep.block_batch) {
    for (int db : cfg.sweep.data_batch) {
      SweepCell cell;
      cell.block_batch = bb;
      cell.data_batch = db;
      std::vector<double> iters;
      for (std::uint64_t seed : cfg.sweep.seeds) {
        ExperimentConfig c = cfg;
        c.run.block_batch = bb;
        c.run.data_batch = db;
        c.run.seed = seed;
        c.sweep.block_batch = {bb};
        c.sweep.data_batch = {db};
        c.sweep.seeds = {seed};
        RunSummary rs;
        try {
          rs = run_experiment(c);
        } catch (const std::exception&) {
          rs.fingerprint = c.fingerprint();
          rs.kind = c.kind;
          rs.seed = seed;
          rs.diverged = true;
          rs.threshold = c.threshold;
          rs.final_metric = kNan;
          rs.stationarity_at_tau = kNan;
          rs.running_min_stationarity = kNan;
          rs.final_stationarity = kNan;
        }
        const bool reached = !rs.diverged && rs.iterations_to_threshold >= 0;
        if (reached)
          iters.push_back(static_cast<double>(rs.iterations_to_threshold));
        else
          ++cell.n_failed;
        ++cell.n_runs;
        res.runs.push_back(std::move(rs));
      }
      if (!iters.empty()) {
        double mean = 0.0;
        for (double v : iters) mean += v;
        mean /= static_cast<double>(iters.size());
        double var = 0.0;
        for (double v : iters) var += (v - mean) * (v - mean);
        cell.mean_iterations = mean;
        cell.std_iterations =
            iters.size() > 1
                ? std::sqrt(var / static_cast<double>(iters.size() - 1))
                : 0.0;
      } else {
        cell.mean_iterations = kNan;
        cell.std_iterations = kNan;
      }
      res.cells.push_back(cell);
    }
  }

  res.table_path = cfg.out_dir + "/sweep_table_" + fp + ".csv";
  {
    std::ofstream out(res.table_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + res.table_path);
    out << "block_batch,data_batch,seed,diverged,iterations_to_threshold,"
           "final_stationarity\n";
    char buf[256];
    std::size_t idx = 0;
    for (int bb : cfg.sweep.block_batch)
      for (int db : cfg.sweep.data_batch)
        for (std::uint64_t seed : cfg.sweep.seeds) {
          const RunSummary& rs = res.runs[idx++];
          std::snprintf(buf, sizeof(buf), "%d,%d,%llu,%d,%ld,%.17g\n", bb, db,
                        static_cast<unsigned long long>(seed),
                        rs.diverged ? 1 : 0, rs.iterations_to_threshold,
                        rs.final_stationarity);
          out << buf;
        }
  }
  res.summary_path = cfg.out_dir + "/sweep_summary_" + fp + ".csv";
  {
    std::ofstream out(res.summary_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + res.summary_path);
    out << "block_batch,data_batch,n_runs,n_failed,mean_iterations_to_"
           "threshold,std_iterations_to_threshold\n";
    char buf[256];
    for (const auto& c : res.cells) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.17g,%.17g\n",
                    c.block_batch, c.data_batch, c.n_runs, c.n_failed,
                    c.mean_iterations, c.std_iterations);
      out << buf;
    }
  }
  return res;
}

namespace {

SmoothnessProfile quiet_profile() {
  SmoothnessProfile prof;
  prof.sigma = 0.0;
  return prof;
}

Eigen::VectorXd random_point(int dim, std::uint64_t seed) {
  RngStream r(seed);
  Eigen::VectorXd x(dim);
  for (int i = 0; i < dim; ++i) x[i] = r.gaussian();
  return x;
}

}  // namespace

std::vector<VerifyItem> verify_all() {
  std::vector<VerifyItem> items;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    items.push_back({name, pass, detail});
  };
  char buf[256];

  {  // closed-form gradient against finite differences
    double worst = 0.0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
      const auto p = synth_generate(seed, ProblemDims{6, 8, 4, 1}, quiet_profile());
      const auto rep = check_gradient(p, random_point(8, seed * 7 + 1));
      worst = std::max(worst, rep.rel_error);
    }
    std::snprintf(buf, sizeof(buf), "max relative error %.3g", worst);
    add("gradient-closed-form", worst < 1e-5, buf);
  }

  {  // estimator fixed points at exact inner solutions, noiseless oracles
    const auto p = synth_generate(21, ProblemDims{5, 7, 3, 1}, quiet_profile());
    const Eigen::VectorXd x = random_point(7, 99);
    const Eigen::VectorXd g = exact_grad_F(p, x);
    RunConfig cfg;
    cfg.block_batch = 5;
    cfg.data_batch = 3;
    std::vector<int> all{0, 1, 2, 3, 4};
    StateV1 s1 = init_state_v1(p);
    s1.x = x;
    StateV2 s2 = init_state_v2(p);
    s2.x = x;
    for (int i = 0; i < 5; ++i) {
      const auto bi = static_cast<std::size_t>(i);
      const Eigen::VectorXd ys = p.lower_solution(i, x);
      const double as = p.dual_solution(i, x);
      s1.y[bi] = s2.y[bi] = ys;
      s1.alpha[bi] = s2.alpha[bi] = Eigen::VectorXd::Constant(1, as);
      s1.s[bi] = p.hess_yy_g(i);
      s1.h_inv[bi] = p.hess_yy_g(i).llt().solve(
          Eigen::MatrixXd::Identity(3, 3));
      s2.v[bi] = p.hess_yy_g(i).llt().solve(p.grad_y_f(i, as));
    }
    const RngStream root(7);
    const double e1 =
        (hypergradient_estimate_v1(p, s1, all, cfg, root, 0) - g).norm();
    const double e2 =
        (hypergradient_estimate_v2(p, s2, all, cfg, root, 0) - g).norm();
    std::snprintf(buf, sizeof(buf), "errors %.3g / %.3g", e1, e2);
    add("estimator-fixed-point", e1 < 1e-10 && e2 < 1e-10, buf);
  }

  {  // one-step contraction factors of the inner updates
    const double mu_g = 1.0, mu_f = 1.0, eta = 0.3;
    Eigen::MatrixXd A = Eigen::VectorXd::LinSpaced(3, mu_g, 2.0).asDiagonal();
    const Eigen::VectorXd target = random_point(3, 5);
    const Eigen::VectorXd rhs = A * target;
    Eigen::VectorXd y = target + Eigen::VectorXd::Unit(3, 0);
    y = y - eta * (A * y - rhs);
    const double fac_y = (y - target).norm();
    double a = 2.0;
    const double a_star = 0.7;
    a = a + eta * (mu_f * a_star - mu_f * a);
    const double fac_a = std::abs(a - a_star);
    const bool ok = std::abs(fac_y - (1.0 - eta * mu_g)) < 1e-12 &&
                    std::abs(fac_a - (1.0 - eta * mu_f) * 1.3) < 1e-12;
    std::snprintf(buf, sizeof(buf), "factors %.12f / %.12f", fac_y, fac_a);
    add("inner-contraction", ok, buf);
  }

  {  // momentum average halves its distance to a fixed Hessian
    Eigen::MatrixXd A = Eigen::VectorXd::LinSpaced(3, 1.0, 2.0).asDiagonal();
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd h = s;
    const double d0 = (s - A).norm();
    bool ok = true;
    for (int t = 1; t <= 6; ++t) {
      hessian_momentum_update(s, h, A, 0.5);
      ok = ok && std::abs((s - A).norm() - d0 * std::pow(0.5, t)) < 1e-12;
    }
    ok = ok && (s * h - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10;
    add("hessian-momentum", ok, "geometric decay and inverse consistency");
  }

  {  // ranking metrics on the worked example
    const std::vector<double> scores{0.9, 0.8, 0.85, 0.1};
    const std::vector<int> labels{1, 1, -1, -1};
    const double auc = metric_auc(scores, labels);
    const double pauc = metric_pauc(scores, labels, 0.5);
    const double pauc_full = metric_pauc(scores, labels, 1.0);
    std::snprintf(buf, sizeof(buf), "auc %.4f pauc(0.5) %.4f", auc, pauc);
    add("ranking-metrics",
        auc == 0.75 && pauc == 0.5 && pauc_full == auc, buf);
  }

  {  // smoothed quantile solve lands next to the K-th largest score
    PaucConfig pc;
    pc.tau1 = 1e-3;
    pc.tau2 = 1e-6;
    pc.epsilon_smooth = 0.01;
    Eigen::VectorXd neg(3);
    neg << 3.0, 2.0, 1.0;
    const double lam = pauc_lambda_solve(neg, 1, 3, pc);
    const double resid = pauc_lambda_grad(lam, neg, 1, 3, pc);
    std::snprintf(buf, sizeof(buf), "lambda %.6f resid %.3g", lam, resid);
    add("quantile-solve", std::abs(lam - 2.0) < 0.01 && std::abs(resid) < 1e-8,
        buf);
  }

  {  // identical configs give byte-identical traces
    ExperimentConfig cfg;
    cfg.kind = "synthetic-v1";
    cfg.profile.sigma = 0.1;
    cfg.run.horizon = 40;
    cfg.run.block_batch = 4;
    cfg.run.data_batch = 2;
    cfg.validate();
    const auto problem = synth_generate(cfg.problem_seed, cfg.dims,
                                        cfg.profile, cfg.curvature_floor);
    RunOptions opts;
    opts.record_every = 5;
    const RunResult r1 = run(problem, cfg.run, Variant::v1, opts);
    const RunResult r2 = run(problem, cfg.run, Variant::v1, opts);
    const bool ok = trace_csv_string(r1.trace, true) ==
                    trace_csv_string(r2.trace, true);
    add("trace-determinism", ok, "two identical short runs");
  }

  return items;
}

}  // namespace mmb
