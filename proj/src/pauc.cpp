#include "mmb/pauc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mmb {

void PaucConfig::validate() const {
  if (rho <= 0.0 || rho > 1.0)
    throw std::invalid_argument("pauc config: rho must be in (0, 1]");
  if (tau1 <= 0.0) throw std::invalid_argument("pauc config: tau1 must be positive");
  if (tau2 <= 0.0) throw std::invalid_argument("pauc config: tau2 must be positive");
  if (epsilon_smooth <= 0.0)
    throw std::invalid_argument("pauc config: epsilon_smooth must be positive");
}

int pauc_top_k(int n_minus, double rho) {
  if (n_minus <= 0) throw std::invalid_argument("pauc_top_k: no negatives");
  return std::max(1, static_cast<int>(std::floor(rho * n_minus)));
}

namespace {

double sigmoid(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

double softplus(double t) {
  // log(1 + exp(t)) without overflow
  return t >= 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

}  // namespace

double pauc_lambda_value(double lambda, const Eigen::VectorXd& neg_scores,
                         int K, int n_minus, const PaucConfig& cfg) {
  cfg.validate();
  if (neg_scores.size() == 0)
    throw std::invalid_argument("pauc lambda: no negative scores");
  double mean_sp = 0.0;
  for (Eigen::Index j = 0; j < neg_scores.size(); ++j)
    mean_sp += cfg.tau1 * softplus((neg_scores[j] - lambda) / cfg.tau1);
  mean_sp /= static_cast<double>(neg_scores.size());
  return (K + cfg.epsilon_smooth) / n_minus * lambda +
         0.5 * cfg.tau2 * lambda * lambda + mean_sp;
}

double pauc_lambda_grad(double lambda, const Eigen::VectorXd& neg_scores,
                        int K, int n_minus, const PaucConfig& cfg) {
  cfg.validate();
  if (neg_scores.size() == 0)
    throw std::invalid_argument("pauc lambda: no negative scores");
  double mean_sig = 0.0;
  for (Eigen::Index j = 0; j < neg_scores.size(); ++j)
    mean_sig += sigmoid((neg_scores[j] - lambda) / cfg.tau1);
  mean_sig /= static_cast<double>(neg_scores.size());
  return (K + cfg.epsilon_smooth) / n_minus + cfg.tau2 * lambda - mean_sig;
}

double pauc_lambda_hess(double lambda, const Eigen::VectorXd& neg_scores,
                        const PaucConfig& cfg) {
  cfg.validate();
  if (neg_scores.size() == 0)
    throw std::invalid_argument("pauc lambda: no negative scores");
  double mean_d = 0.0;
  for (Eigen::Index j = 0; j < neg_scores.size(); ++j) {
    const double s = sigmoid((neg_scores[j] - lambda) / cfg.tau1);
    mean_d += s * (1.0 - s);
  }
  mean_d /= static_cast<double>(neg_scores.size());
  return cfg.tau2 + mean_d / cfg.tau1;
}

double pauc_lambda_solve(const Eigen::VectorXd& neg_scores, int K, int n_minus,
                         const PaucConfig& cfg) {
  const double span = neg_scores.maxCoeff() - neg_scores.minCoeff() + 1.0;
  double lo = neg_scores.minCoeff() - span;
  double hi = neg_scores.maxCoeff() + span;
  while (pauc_lambda_grad(lo, neg_scores, K, n_minus, cfg) > 0.0) lo -= span;
  while (pauc_lambda_grad(hi, neg_scores, K, n_minus, cfg) < 0.0) hi += span;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (pauc_lambda_grad(mid, neg_scores, K, n_minus, cfg) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

PaucFrozen pauc_freeze(const Eigen::VectorXd& neg_scores, double lambda,
                       double b, double H, const PaucConfig& cfg) {
  cfg.validate();
  if (H <= 0.0) throw std::invalid_argument("pauc_freeze: H must be positive");
  PaucFrozen fr;
  const auto n = neg_scores.size();
  fr.phi.resize(n);
  fr.phi_prime.resize(n);
  fr.sq_frozen.resize(n);
  fr.h_frozen = neg_scores;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double ph = sigmoid(neg_scores[j] - lambda);
    fr.phi[j] = ph;
    fr.phi_prime[j] = ph * (1.0 - ph);
    fr.sq_frozen[j] = (neg_scores[j] - b) * (neg_scores[j] - b);
  }
  fr.h_inv = 1.0 / H;
  return fr;
}

namespace {

struct LiveScores {
  Eigen::VectorXd pos;  // h_i at the evaluation parameters
  Eigen::VectorXd neg;
};

LiveScores live_scores(const TaskParams& p, const TaskDataset& d,
                       const std::vector<int>& pos,
                       const std::vector<int>& neg) {
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("pauc surrogate: batch needs both classes");
  LiveScores s;
  s.pos = score_batch(p, d, pos);
  s.neg = score_batch(p, d, neg);
  return s;
}

}  // namespace

double pauc_g_value(const TaskParams& p, double a, double b, double alpha,
                    const TaskDataset& d, const std::vector<int>& pos,
                    const std::vector<int>& neg, double lambda,
                    const PaucFrozen& fr, const PaucConfig& cfg) {
  const LiveScores s = live_scores(p, d, pos, neg);
  const double bp = static_cast<double>(pos.size());
  const double bn = static_cast<double>(neg.size());
  const double wneg = 1.0 / (bn * cfg.rho);

  double pos_sq = 0.0, pos_mean = 0.0;
  for (Eigen::Index i = 0; i < s.pos.size(); ++i) {
    pos_sq += (s.pos[i] - a) * (s.pos[i] - a) / bp;
    pos_mean += s.pos[i] / bp;
  }
  // smoothed top-K weight of the batch negatives, differentiable part
  double smean = 0.0;
  for (Eigen::Index j = 0; j < s.neg.size(); ++j)
    smean += sigmoid((s.neg[j] - lambda) / cfg.tau1) / bn;

  double neg_sq = 0.0, neg_margin = 0.0, corr_sq = 0.0, corr_margin = 0.0;
  for (Eigen::Index j = 0; j < s.neg.size(); ++j) {
    neg_sq += wneg * fr.phi[j] * (s.neg[j] - b) * (s.neg[j] - b);
    neg_margin += wneg * fr.phi[j] * s.neg[j];
    const double l_phi = fr.phi_prime[j] * (s.neg[j] - fr.h_inv * smean);
    corr_sq += wneg * l_phi * fr.sq_frozen[j];
    corr_margin += wneg * l_phi * fr.h_frozen[j];
  }
  if (cfg.practical_mode) corr_sq = corr_margin = 0.0;
  return pos_sq + neg_sq + corr_sq +
         2.0 * alpha * (cfg.margin + neg_margin + corr_margin - pos_mean);
}

PaucGGrads pauc_g_grad(const TaskParams& p, double a, double b, double alpha,
                       const TaskDataset& d, const std::vector<int>& pos,
                       const std::vector<int>& neg, double lambda,
                       const PaucFrozen& fr, const PaucConfig& cfg) {
  const LiveScores s = live_scores(p, d, pos, neg);
  const double bp = static_cast<double>(pos.size());
  const double bn = static_cast<double>(neg.size());
  const double wneg = 1.0 / (bn * cfg.rho);

  PaucGGrads out;
  out.value = pauc_g_value(p, a, b, alpha, d, pos, neg, lambda, fr, cfg);
  out.d_params.encoder = Eigen::MatrixXd::Zero(p.encoder.rows(), p.encoder.cols());
  out.d_params.head = Eigen::VectorXd::Zero(p.head.size());

  // weight of the correction rows: sum_j phi'_j (Q_j + 2 alpha R_j)
  double corr_total = 0.0;
  if (!cfg.practical_mode)
    for (Eigen::Index j = 0; j < s.neg.size(); ++j)
      corr_total += fr.phi_prime[j] * (fr.sq_frozen[j] + 2.0 * alpha * fr.h_frozen[j]);

  double pos_margin = 0.0, neg_margin = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const double h = s.pos[ii];
    pos_margin += h / bp;
    const double dh = (2.0 * (h - a) - 2.0 * alpha) / bp;
    accumulate_score_grad(out.d_params, p, d, pos[i], dh);
    out.d_a += -2.0 * (h - a) / bp;
  }
  for (std::size_t j = 0; j < neg.size(); ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    const double h = s.neg[jj];
    neg_margin += wneg * fr.phi[jj] * h;
    double dh = wneg * (2.0 * fr.phi[jj] * (h - b) + 2.0 * alpha * fr.phi[jj]);
    if (!cfg.practical_mode) {
      dh += wneg * fr.phi_prime[jj] * (fr.sq_frozen[jj] + 2.0 * alpha * fr.h_frozen[jj]);
      const double sig = sigmoid((h - lambda) / cfg.tau1);
      dh -= wneg * fr.h_inv * (sig * (1.0 - sig) / cfg.tau1) / bn * corr_total;
    }
    accumulate_score_grad(out.d_params, p, d, neg[j], dh);
    out.d_b += -2.0 * wneg * fr.phi[jj] * (h - b);
  }
  out.d_alpha = 2.0 * (cfg.margin + neg_margin - pos_margin) - 2.0 * alpha;
  return out;
}

double mean_pauc(const Scorer& s, const std::vector<TaskDataset>& data,
                 double rho) {
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Eigen::VectorXd h = score_all(task_params(s, static_cast<int>(k)),
                                        data[k]);
    std::vector<double> scores(h.data(), h.data() + h.size());
    std::vector<int> labels(data[k].labels.data(),
                            data[k].labels.data() + data[k].labels.size());
    total += metric_pauc(scores, labels, rho);
  }
  return total / static_cast<double>(data.size());
}

PaucState init_pauc(const std::vector<TaskDataset>& data,
                    const AucModelConfig& mc, const PaucConfig& pc,
                    std::uint64_t seed) {
  pc.validate();
  AucCtState base = init_auc_ct(data, mc, seed);
  const int m = static_cast<int>(data.size());
  PaucState st;
  st.w = std::move(base.w);
  st.a = std::move(base.a);
  st.b = std::move(base.b);
  st.alpha = std::move(base.alpha);
  st.lambda = Eigen::VectorXd::Zero(m);
  // worst-case curvature of the smoothed quantile objective
  st.H = Eigen::VectorXd::Constant(m, pc.tau2 + 0.25 / pc.tau1);
  st.z_encoder = std::move(base.z_encoder);
  st.z_heads = std::move(base.z_heads);
  st.z_a = std::move(base.z_a);
  st.z_b = std::move(base.z_b);
  return st;
}

bool step_pauc(PaucState& st, const std::vector<TaskDataset>& data,
               const PaucConfig& pc, const RunConfig& cfg, long iter) {
  const int m = static_cast<int>(data.size());
  const RngStream root(cfg.seed);
  RngStream bs = root.at({stream_label::blocks, static_cast<std::uint64_t>(iter)});
  const std::vector<int> tasks = sample_blocks(bs, m, cfg.block_batch);
  const double inv_batch = 1.0 / static_cast<double>(tasks.size());

  Eigen::MatrixXd d_enc = Eigen::MatrixXd::Zero(st.w.encoder.rows(),
                                                st.w.encoder.cols());
  std::vector<std::pair<int, Eigen::VectorXd>> d_heads;
  Eigen::VectorXd d_a = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd d_b = Eigen::VectorXd::Zero(m);

  for (int k : tasks) {
    const auto ki = static_cast<std::size_t>(k);
    RngStream batch_base = root.at({stream_label::data,
                                    static_cast<std::uint64_t>(iter),
                                    static_cast<std::uint64_t>(k)});
    const std::vector<int> batch =
        two_class_batch(data[ki], batch_base, cfg.data_batch);
    std::vector<int> pos, neg;
    for (int idx : batch)
      (data[ki].labels[idx] == 1 ? pos : neg).push_back(idx);

    const TaskParams w_k = task_params(st.w, k);
    const Eigen::VectorXd neg_scores = score_batch(w_k, data[ki], neg);
    const Eigen::VectorXd pos_scores = score_batch(w_k, data[ki], pos);
    const int n_minus = data[ki].negatives();
    const int top_k = pauc_top_k(n_minus, pc.rho);

    // dual ascent at the incoming lambda's weights, clipped at zero
    double margin = pc.margin - pos_scores.mean();
    const double wneg = 1.0 / (static_cast<double>(neg.size()) * pc.rho);
    for (Eigen::Index j = 0; j < neg_scores.size(); ++j)
      margin += wneg * sigmoid(neg_scores[j] - st.lambda[k]) * neg_scores[j];
    const double new_alpha =
        std::max(0.0, st.alpha[k] + cfg.eta1 * (2.0 * margin - 2.0 * st.alpha[k]));

    // lambda step and curvature momentum, both at the incoming lambda
    const double lgrad =
        pauc_lambda_grad(st.lambda[k], neg_scores, top_k, n_minus, pc);
    const double lhess = pauc_lambda_hess(st.lambda[k], neg_scores, pc);
    const double new_lambda = st.lambda[k] - cfg.eta2 * lgrad;
    const double new_h = (1.0 - cfg.beta1) * st.H[k] + cfg.beta1 * lhess;

    st.alpha[k] = new_alpha;
    st.lambda[k] = new_lambda;
    st.H[k] = new_h;

    const PaucFrozen fr =
        pauc_freeze(neg_scores, st.lambda[k], st.b[k], st.H[k], pc);
    const PaucGGrads g = pauc_g_grad(w_k, st.a[k], st.b[k], st.alpha[k],
                                     data[ki], pos, neg, st.lambda[k], fr, pc);
    d_enc += inv_batch * g.d_params.encoder;
    d_heads.emplace_back(k, inv_batch * g.d_params.head);
    d_a[k] = inv_batch * g.d_a;
    d_b[k] = inv_batch * g.d_b;
  }

  st.z_encoder = (1.0 - cfg.beta0) * st.z_encoder + cfg.beta0 * d_enc;
  for (int k = 0; k < m; ++k)
    st.z_heads[static_cast<std::size_t>(k)] *= (1.0 - cfg.beta0);
  for (auto& [k, dh] : d_heads)
    st.z_heads[static_cast<std::size_t>(k)] += cfg.beta0 * dh;
  st.z_a = (1.0 - cfg.beta0) * st.z_a + cfg.beta0 * d_a;
  st.z_b = (1.0 - cfg.beta0) * st.z_b + cfg.beta0 * d_b;

  st.w.encoder -= cfg.eta0 * st.z_encoder;
  for (int k = 0; k < m; ++k)
    st.w.heads[static_cast<std::size_t>(k)] -=
        cfg.eta0 * st.z_heads[static_cast<std::size_t>(k)];
  st.a -= cfg.eta0 * st.z_a;
  st.b -= cfg.eta0 * st.z_b;

  bool ok = st.w.encoder.allFinite() && st.a.allFinite() && st.b.allFinite() &&
            st.alpha.allFinite() && st.lambda.allFinite() && st.H.allFinite();
  for (int k = 0; ok && k < m; ++k)
    ok = st.w.heads[static_cast<std::size_t>(k)].allFinite();
  return ok;
}

namespace {

constexpr double kNanP = std::numeric_limits<double>::quiet_NaN();

double full_surrogate_pauc(const PaucState& st,
                           const std::vector<TaskDataset>& data,
                           const PaucConfig& pc) {
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const int ki = static_cast<int>(k);
    std::vector<int> pos, neg;
    for (Eigen::Index i = 0; i < data[k].labels.size(); ++i)
      (data[k].labels[i] == 1 ? pos : neg).push_back(static_cast<int>(i));
    const TaskParams w_k = task_params(st.w, ki);
    const Eigen::VectorXd ns = score_batch(w_k, data[k], neg);
    const PaucFrozen fr =
        pauc_freeze(ns, st.lambda[ki], st.b[ki], st.H[ki], pc);
    total += pauc_g_value(w_k, st.a[ki], st.b[ki], st.alpha[ki], data[k], pos,
                          neg, st.lambda[ki], fr, pc) -
             st.alpha[ki] * st.alpha[ki];
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

AppRunResult run_pauc(const std::vector<TaskDataset>& data,
                      const AucModelConfig& mc, const PaucConfig& pc,
                      const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  pc.validate();
  if (cfg.data_batch < 2)
    throw std::invalid_argument("run_pauc: data_batch must be >= 2");
  if (cfg.block_batch > static_cast<int>(data.size()))
    throw std::invalid_argument("run_pauc: block_batch exceeds task count");
  if (opts.record_every < 1)
    throw std::invalid_argument("run_pauc: record_every must be >= 1");
  PaucState st = init_pauc(data, mc, pc, cfg.seed);
  AppRunResult res;
  const auto t_start = std::chrono::steady_clock::now();
  for (long t = 0; t < cfg.horizon; ++t) {
    const bool record = (t % opts.record_every == 0) || (t == cfg.horizon - 1);
    if (record) {
      TraceRecord rec;
      rec.iter = t;
      rec.F = full_surrogate_pauc(st, data, pc);
      rec.grad_norm_sq = rec.est_gap_sq = kNanP;
      rec.delta_y = rec.delta_alpha = rec.delta_h_or_v = kNanP;
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
      res.trace.push_back(rec);
      if (opts.on_record) opts.on_record(rec);
      res.final_metric = mean_pauc(st.w, data, pc.rho);
      res.best_metric = std::max(res.best_metric, res.final_metric);
    }
    if (!step_pauc(st, data, pc, cfg, t)) {
      res.diverged = true;
      res.completed_iters = t;
      return res;
    }
    res.completed_iters = t + 1;
  }
  res.final_metric = mean_pauc(st.w, data, pc.rho);
  res.best_metric = std::max(res.best_metric, res.final_metric);
  return res;
}

}  // namespace mmb
