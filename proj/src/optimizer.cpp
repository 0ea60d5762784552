#include "mmb/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <type_traits>

#include "mmb/hypergradient.hpp"

namespace mmb {

void RunConfig::validate() const {
  if (eta0 <= 0.0 || eta1 <= 0.0 || eta2 <= 0.0 || eta3 <= 0.0)
    throw std::invalid_argument("run config: step sizes must be positive");
  if (beta0 <= 0.0 || beta0 > 1.0)
    throw std::invalid_argument("run config: beta0 must be in (0, 1]");
  if (beta1 <= 0.0 || beta1 > 1.0)
    throw std::invalid_argument("run config: beta1 must be in (0, 1]");
  if (block_batch < 1)
    throw std::invalid_argument("run config: block_batch must be >= 1");
  if (data_batch < 1)
    throw std::invalid_argument("run config: data_batch must be >= 1");
  if (horizon < 0) throw std::invalid_argument("run config: horizon must be >= 0");
}

RunConfig theorem_step_sizes(double epsilon, int block_batch, int data_batch,
                             int m) {
  if (epsilon <= 0.0)
    throw std::invalid_argument("theorem_step_sizes: epsilon must be positive");
  if (block_batch < 1 || data_batch < 1 || m < block_batch)
    throw std::invalid_argument("theorem_step_sizes: bad batch sizes");
  const double e2 = epsilon * epsilon;
  const double min_batch = std::min(block_batch, data_batch);
  auto cap = [](double v) { return std::min(v, 1.0); };
  RunConfig cfg;
  cfg.eta1 = cfg.eta2 = cfg.eta3 = cap(data_batch * e2);
  cfg.beta1 = cap(data_batch * e2);
  cfg.beta0 = cap(min_batch * e2);
  cfg.eta0 = cap(std::min(min_batch * e2,
                          data_batch * block_batch * e2 / static_cast<double>(m)));
  cfg.block_batch = block_batch;
  cfg.data_batch = data_batch;
  const double e4 = e2 * e2;
  const double t = std::max(static_cast<double>(m) /
                                (static_cast<double>(block_batch) * data_batch * e4),
                            1.0 / (min_batch * e4));
  cfg.horizon = static_cast<long>(std::ceil(t));
  return cfg;
}

StateV1 init_state_v1(const Problem& p) {
  const auto& d = p.dims();
  StateV1 st;
  st.x = Eigen::VectorXd::Zero(d.d_x);
  st.z = Eigen::VectorXd::Zero(d.d_x);
  const Eigen::VectorXd a0 =
      p.dual_set().project(Eigen::VectorXd::Zero(d.d_alpha));
  st.alpha.assign(static_cast<std::size_t>(d.blocks), a0);
  st.y.assign(static_cast<std::size_t>(d.blocks), Eigen::VectorXd::Zero(d.d_y));
  const double mu = p.profile().mu_g;
  st.s.assign(static_cast<std::size_t>(d.blocks),
              mu * Eigen::MatrixXd::Identity(d.d_y, d.d_y));
  st.h_inv.assign(static_cast<std::size_t>(d.blocks),
                  (1.0 / mu) * Eigen::MatrixXd::Identity(d.d_y, d.d_y));
  return st;
}

StateV2 init_state_v2(const Problem& p) {
  const auto& d = p.dims();
  StateV2 st;
  st.x = Eigen::VectorXd::Zero(d.d_x);
  st.z = Eigen::VectorXd::Zero(d.d_x);
  const Eigen::VectorXd a0 =
      p.dual_set().project(Eigen::VectorXd::Zero(d.d_alpha));
  st.alpha.assign(static_cast<std::size_t>(d.blocks), a0);
  st.y.assign(static_cast<std::size_t>(d.blocks), Eigen::VectorXd::Zero(d.d_y));
  st.v.assign(static_cast<std::size_t>(d.blocks), Eigen::VectorXd::Zero(d.d_y));
  return st;
}

Eigen::VectorXd project_dual(const Eigen::VectorXd& alpha, const DualSet& set) {
  return set.project(alpha);
}

Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius) {
  if (radius <= 0.0)
    throw std::invalid_argument("project_ball: radius must be positive");
  const double n = v.norm();
  if (n <= radius) return v;
  return (radius / n) * v;
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& z,
                               const Eigen::VectorXd& delta, double beta) {
  return (1.0 - beta) * z + beta * delta;
}

void hessian_momentum_update(Eigen::MatrixXd& s, Eigen::MatrixXd& h_inv,
                             const Eigen::MatrixXd& sample, double beta1) {
  s = (1.0 - beta1) * s + beta1 * sample;
  h_inv = s.llt().solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
}

Eigen::VectorXd v_update(const Eigen::VectorXd& v,
                         const Eigen::MatrixXd& hess_sample,
                         const Eigen::VectorXd& grad_y_f_sample, double eta3,
                         double radius) {
  return project_ball(v - eta3 * (hess_sample * v - grad_y_f_sample), radius);
}

namespace {

RngStream purpose_stream(const RngStream& root, std::uint64_t label, long iter,
                         int block) {
  return root.at({label, static_cast<std::uint64_t>(iter),
                  static_cast<std::uint64_t>(block)});
}

std::vector<int> batch_main(const Problem& p, const RngStream& root,
                            const RunConfig& cfg, long iter, int block) {
  RngStream s = purpose_stream(root, stream_label::data, iter, block);
  return sample_data(s, p.sample_count(block), cfg.data_batch);
}

std::vector<int> batch_product(const Problem& p, const RngStream& root,
                               const RunConfig& cfg, long iter, int block) {
  if (!cfg.independent_product_batches)
    return batch_main(p, root, cfg, iter, block);
  RngStream s = purpose_stream(root, stream_label::data_alt, iter, block);
  return sample_data(s, p.sample_count(block), cfg.data_batch);
}

double ball_radius(const Problem& p, const RunConfig& cfg) {
  return cfg.gamma_radius > 0.0 ? cfg.gamma_radius
                                : p.profile().C_f / p.profile().mu_g;
}

}  // namespace

Eigen::VectorXd hypergradient_estimate_v1(const Problem& p, const StateV1& st,
                                          const std::vector<int>& blocks,
                                          const RunConfig& cfg,
                                          const RngStream& run_root, long iter) {
  if (blocks.empty())
    throw std::invalid_argument("hypergradient estimate: empty block batch");
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(p.dims().d_x);
  for (int i : blocks) {
    OracleQuery q;
    q.block = i;
    q.x = st.x;
    q.alpha = st.alpha[static_cast<std::size_t>(i)];
    q.y = st.y[static_cast<std::size_t>(i)];
    q.batch = batch_main(p, run_root, cfg, iter, i);
    RngStream rx = purpose_stream(run_root, stream_label::grad_x_f, iter, i);
    const Eigen::VectorXd gx = p.oracle(OracleKind::grad_x_f, q, rx);
    RngStream rj = purpose_stream(run_root, stream_label::jac_xy_g, iter, i);
    const Eigen::MatrixXd jac = p.oracle(OracleKind::jac_xy_g, q, rj);
    OracleQuery q2 = q;
    q2.batch = batch_product(p, run_root, cfg, iter, i);
    RngStream ry = purpose_stream(run_root, stream_label::grad_y_f, iter, i);
    const Eigen::VectorXd gy = p.oracle(OracleKind::grad_y_f, q2, ry);
    delta += gx - jac * (st.h_inv[static_cast<std::size_t>(i)] * gy);
  }
  return delta / static_cast<double>(blocks.size());
}

Eigen::VectorXd hypergradient_estimate_v2(const Problem& p, const StateV2& st,
                                          const std::vector<int>& blocks,
                                          const RunConfig& cfg,
                                          const RngStream& run_root, long iter) {
  if (blocks.empty())
    throw std::invalid_argument("hypergradient estimate: empty block batch");
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(p.dims().d_x);
  for (int i : blocks) {
    OracleQuery q;
    q.block = i;
    q.x = st.x;
    q.alpha = st.alpha[static_cast<std::size_t>(i)];
    q.y = st.y[static_cast<std::size_t>(i)];
    q.batch = batch_main(p, run_root, cfg, iter, i);
    RngStream rx = purpose_stream(run_root, stream_label::grad_x_f, iter, i);
    const Eigen::VectorXd gx = p.oracle(OracleKind::grad_x_f, q, rx);
    RngStream rj = purpose_stream(run_root, stream_label::jac_xy_g, iter, i);
    const Eigen::MatrixXd jac = p.oracle(OracleKind::jac_xy_g, q, rj);
    delta += gx - jac * st.v[static_cast<std::size_t>(i)];
  }
  return delta / static_cast<double>(blocks.size());
}

namespace {

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }
bool finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

struct BlockDraws {
  Eigen::VectorXd alpha_grad;  // 1-vector
  Eigen::VectorXd y_grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd y_f;  // second variant only
};

BlockDraws draw_block_updates(const Problem& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& alpha,
                              const Eigen::VectorXd& y, const RunConfig& cfg,
                              const RngStream& root, long iter, int block,
                              bool need_y_f) {
  OracleQuery q;
  q.block = block;
  q.x = x;
  q.alpha = alpha;
  q.y = y;
  q.batch = batch_main(p, root, cfg, iter, block);
  BlockDraws d;
  RngStream ra = purpose_stream(root, stream_label::grad_alpha_f, iter, block);
  d.alpha_grad = p.oracle(OracleKind::grad_alpha_f, q, ra);
  RngStream rg = purpose_stream(root, stream_label::grad_y_g, iter, block);
  d.y_grad = p.oracle(OracleKind::grad_y_g, q, rg);
  RngStream rh = purpose_stream(root, stream_label::hess_yy_g, iter, block);
  d.hess = p.oracle(OracleKind::hess_yy_g, q, rh);
  if (need_y_f) {
    OracleQuery q2 = q;
    q2.batch = batch_product(p, root, cfg, iter, block);
    RngStream ry = purpose_stream(root, stream_label::grad_y_f, iter, block);
    d.y_f = p.oracle(OracleKind::grad_y_f, q2, ry);
  }
  return d;
}

}  // namespace

bool step_v1(const Problem& p, StateV1& st, const RunConfig& cfg, long iter) {
  const RngStream root(cfg.seed);
  RngStream bs = root.at({stream_label::blocks, static_cast<std::uint64_t>(iter)});
  const std::vector<int> blocks =
      sample_blocks(bs, p.dims().blocks, cfg.block_batch);

  // estimator first: it must see the pre-step iterates and inverses
  const Eigen::VectorXd delta =
      hypergradient_estimate_v1(p, st, blocks, cfg, root, iter);

  for (int i : blocks) {
    const auto bi = static_cast<std::size_t>(i);
    const BlockDraws d = draw_block_updates(p, st.x, st.alpha[bi], st.y[bi],
                                            cfg, root, iter, i, false);
    const Eigen::VectorXd new_alpha =
        project_dual(st.alpha[bi] + cfg.eta1 * d.alpha_grad, p.dual_set());
    const Eigen::VectorXd new_y = st.y[bi] - cfg.eta2 * d.y_grad;
    st.alpha[bi] = new_alpha;
    st.y[bi] = new_y;
    hessian_momentum_update(st.s[bi], st.h_inv[bi], d.hess, cfg.beta1);
    if (!finite(st.alpha[bi]) || !finite(st.y[bi]) || !finite(st.s[bi]) ||
        !finite(st.h_inv[bi]))
      return false;
  }

  st.z = moving_average(st.z, delta, cfg.beta0);
  st.x -= cfg.eta0 * st.z;
  return finite(st.x) && finite(st.z);
}

bool step_v2(const Problem& p, StateV2& st, const RunConfig& cfg, long iter) {
  const RngStream root(cfg.seed);
  RngStream bs = root.at({stream_label::blocks, static_cast<std::uint64_t>(iter)});
  const std::vector<int> blocks =
      sample_blocks(bs, p.dims().blocks, cfg.block_batch);

  const Eigen::VectorXd delta =
      hypergradient_estimate_v2(p, st, blocks, cfg, root, iter);
  const double radius = ball_radius(p, cfg);

  for (int i : blocks) {
    const auto bi = static_cast<std::size_t>(i);
    const BlockDraws d = draw_block_updates(p, st.x, st.alpha[bi], st.y[bi],
                                            cfg, root, iter, i, true);
    const Eigen::VectorXd new_alpha =
        project_dual(st.alpha[bi] + cfg.eta1 * d.alpha_grad, p.dual_set());
    const Eigen::VectorXd new_y = st.y[bi] - cfg.eta2 * d.y_grad;
    const Eigen::VectorXd new_v =
        v_update(st.v[bi], d.hess, d.y_f, cfg.eta3, radius);
    st.alpha[bi] = new_alpha;
    st.y[bi] = new_y;
    st.v[bi] = new_v;
    if (!finite(st.alpha[bi]) || !finite(st.y[bi]) || !finite(st.v[bi]))
      return false;
  }

  st.z = moving_average(st.z, delta, cfg.beta0);
  st.x -= cfg.eta0 * st.z;
  return finite(st.x) && finite(st.z);
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

template <typename State, typename StepFn>
RunResult run_impl(const Problem& p, State& st, const RunConfig& cfg,
                   const RunOptions& opts, StepFn step_fn) {
  cfg.validate();
  if (opts.record_every < 1)
    throw std::invalid_argument("run: record_every must be >= 1");
  const auto* synth = dynamic_cast<const SyntheticQuadraticProblem*>(&p);
  const bool diag = opts.diagnostics && synth != nullptr;
  std::set<long> extras(opts.extra_record_iters.begin(),
                        opts.extra_record_iters.end());
  RunResult res;
  const auto t_start = std::chrono::steady_clock::now();
  for (long t = 0; t < cfg.horizon; ++t) {
    const bool record = (t % opts.record_every == 0) || (t == cfg.horizon - 1) ||
                        (extras.count(t) > 0);
    TraceRecord rec;
    Eigen::VectorXd grad_f;
    if (record) {
      rec.iter = t;
      rec.F = rec.grad_norm_sq = rec.est_gap_sq = kNan;
      rec.delta_y = rec.delta_alpha = rec.delta_h_or_v = kNan;
      if (diag) {
        rec.F = synth->objective(st.x);
        grad_f = exact_grad_F(*synth, st.x);
        rec.grad_norm_sq = grad_f.squaredNorm();
        DeltaErrors de;
        if constexpr (std::is_same_v<State, StateV1>)
          de = delta_errors_v1(*synth, st);
        else
          de = delta_errors_v2(*synth, st);
        rec.delta_y = de.delta_y;
        rec.delta_alpha = de.delta_alpha;
        rec.delta_h_or_v = de.delta_h_or_v;
      }
    }
    const bool ok = step_fn(p, st, cfg, t);
    if (record) {
      if (diag && grad_f.size() > 0)
        rec.est_gap_sq = (grad_f - st.z).squaredNorm();
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
      res.trace.push_back(rec);
      if (opts.on_record) opts.on_record(rec);
    }
    if (!ok) {
      res.diverged = true;
      res.completed_iters = t;
      return res;
    }
    res.completed_iters = t + 1;
  }
  return res;
}

}  // namespace

RunResult run_v1(const Problem& p, StateV1& st, const RunConfig& cfg,
                 const RunOptions& opts) {
  return run_impl(p, st, cfg, opts, step_v1);
}

RunResult run_v2(const Problem& p, StateV2& st, const RunConfig& cfg,
                 const RunOptions& opts) {
  return run_impl(p, st, cfg, opts, step_v2);
}

RunResult run(const Problem& p, const RunConfig& cfg, Variant variant,
              const RunOptions& opts) {
  if (variant == Variant::v1) {
    StateV1 st = init_state_v1(p);
    return run_v1(p, st, cfg, opts);
  }
  StateV2 st = init_state_v2(p);
  return run_v2(p, st, cfg, opts);
}

std::string trace_csv_string(const std::vector<TraceRecord>& trace,
                             bool zero_elapsed) {
  std::string out =
      "iter,F,grad_norm_sq,est_gap_sq,delta_y,delta_alpha,delta_h_or_v,"
      "elapsed_ms\n";
  char buf[512];
  for (const auto& r : trace) {
    const double elapsed = zero_elapsed ? 0.0 : r.elapsed_ms;
    std::snprintf(buf, sizeof(buf),
                  "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter,
                  r.F, r.grad_norm_sq, r.est_gap_sq, r.delta_y, r.delta_alpha,
                  r.delta_h_or_v, elapsed);
    out += buf;
  }
  return out;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRecord>& trace, bool zero_elapsed) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << trace_csv_string(trace, zero_elapsed);
}

}  // namespace mmb
