#include "mmb/auc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mmb {

TaskParams& TaskParams::operator+=(const TaskParams& o) {
  encoder += o.encoder;
  head += o.head;
  return *this;
}

TaskParams& TaskParams::operator-=(const TaskParams& o) {
  encoder -= o.encoder;
  head -= o.head;
  return *this;
}

TaskParams& TaskParams::operator*=(double c) {
  encoder *= c;
  head *= c;
  return *this;
}

double TaskParams::squared_norm() const {
  return encoder.squaredNorm() + head.squaredNorm();
}

TaskParams task_params(const Scorer& s, int task) {
  if (task < 0 || task >= static_cast<int>(s.heads.size()))
    throw std::invalid_argument("task_params: task out of range");
  return TaskParams{s.encoder, s.heads[static_cast<std::size_t>(task)]};
}

double score(const TaskParams& p, const Eigen::VectorXd& x) {
  return p.head.dot((p.encoder * x).array().tanh().matrix());
}

Eigen::VectorXd score_batch(const TaskParams& p, const TaskDataset& d,
                            const std::vector<int>& batch) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[static_cast<Eigen::Index>(i)] =
        score(p, d.features.row(batch[i]).transpose());
  return out;
}

Eigen::VectorXd score_all(const TaskParams& p, const TaskDataset& d) {
  Eigen::VectorXd out(d.features.rows());
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    out[i] = score(p, d.features.row(i).transpose());
  return out;
}

namespace {

void check_scored(const std::vector<double>& s, const std::vector<int>& l) {
  if (s.size() != l.size() || s.empty())
    throw std::invalid_argument("metric: scores/labels size mismatch");
  int np = 0, nn = 0;
  for (int v : l) {
    if (v == 1)
      ++np;
    else if (v == -1)
      ++nn;
    else
      throw std::invalid_argument("metric: labels must be +1 or -1");
  }
  if (np == 0 || nn == 0)
    throw std::invalid_argument("metric: need both classes");
}

}  // namespace

double metric_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  check_scored(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // average ranks over tie groups, then the rank-sum identity
  double pos_rank_sum = 0.0;
  std::size_t np = 0;
  std::size_t lo = 0;
  while (lo < n) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const double avg_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++np;
      }
    lo = hi + 1;
  }
  const double npd = static_cast<double>(np);
  const double nnd = static_cast<double>(n - np);
  return (pos_rank_sum - npd * (npd + 1.0) / 2.0) / (npd * nnd);
}

double metric_pauc(const std::vector<double>& scores,
                   const std::vector<int>& labels, double rho) {
  check_scored(scores, labels);
  if (rho <= 0.0 || rho > 1.0)
    throw std::invalid_argument("metric_pauc: rho must be in (0, 1]");
  std::vector<std::size_t> neg;
  std::vector<double> pos;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1)
      pos.push_back(scores[i]);
    else
      neg.push_back(i);
  }
  const auto k = static_cast<std::size_t>(
      std::floor(rho * static_cast<double>(neg.size())));
  if (k == 0)
    throw std::invalid_argument("metric_pauc: rho keeps no negatives");
  std::sort(neg.begin(), neg.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  neg.resize(k);
  double total = 0.0;
  for (double hp : pos)
    for (std::size_t j : neg) {
      const double hn = scores[j];
      if (hp > hn)
        total += 1.0;
      else if (hp == hn)
        total += 0.5;
    }
  return total / (static_cast<double>(pos.size()) * static_cast<double>(k));
}

namespace {

struct ScoreForward {
  Eigen::VectorXd x;
  Eigen::VectorXd z;   // tanh(W x)
  double h = 0.0;
};

ScoreForward forward(const TaskParams& p, const TaskDataset& d, int idx) {
  ScoreForward f;
  f.x = d.features.row(idx).transpose();
  f.z = (p.encoder * f.x).array().tanh().matrix();
  f.h = p.head.dot(f.z);
  return f;
}

// d h / d params at a forward pass
void accumulate_score_grad(TaskParams& acc, const TaskParams& p,
                           const ScoreForward& f, double weight) {
  acc.head += weight * f.z;
  const Eigen::VectorXd gate =
      (1.0 - f.z.array().square()).matrix().cwiseProduct(p.head);
  acc.encoder += weight * gate * f.x.transpose();
}

TaskParams zeros_like(const TaskParams& p) {
  TaskParams z;
  z.encoder = Eigen::MatrixXd::Zero(p.encoder.rows(), p.encoder.cols());
  z.head = Eigen::VectorXd::Zero(p.head.size());
  return z;
}

double sigmoid(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

void accumulate_score_grad(TaskParams& acc, const TaskParams& p,
                           const TaskDataset& d, int idx, double weight) {
  const ScoreForward f = forward(p, d, idx);
  accumulate_score_grad(acc, p, f, weight);
}

AucLossGrads auc_minmax_loss(const TaskParams& p, double a, double b,
                             double alpha, double margin, const TaskDataset& d,
                             const std::vector<int>& batch) {
  if (batch.empty()) throw std::invalid_argument("auc_minmax_loss: empty batch");
  std::vector<int> pos, neg;
  for (int idx : batch)
    (d.labels[idx] == 1 ? pos : neg).push_back(idx);
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("auc_minmax_loss: batch needs both classes");
  AucLossGrads out;
  out.d_params = zeros_like(p);
  const double wp = 1.0 / static_cast<double>(pos.size());
  const double wn = 1.0 / static_cast<double>(neg.size());
  double mean_pos = 0.0, mean_neg = 0.0;
  for (int idx : pos) {
    const ScoreForward f = forward(p, d, idx);
    out.loss += wp * (f.h - a) * (f.h - a);
    out.d_a += -2.0 * wp * (f.h - a);
    mean_pos += wp * f.h;
    accumulate_score_grad(out.d_params, p, f,
                          wp * (2.0 * (f.h - a) - 2.0 * alpha));
  }
  for (int idx : neg) {
    const ScoreForward f = forward(p, d, idx);
    out.loss += wn * (f.h - b) * (f.h - b);
    out.d_b += -2.0 * wn * (f.h - b);
    mean_neg += wn * f.h;
    accumulate_score_grad(out.d_params, p, f,
                          wn * (2.0 * (f.h - b) + 2.0 * alpha));
  }
  out.loss += 2.0 * alpha * (margin + mean_neg - mean_pos) - alpha * alpha;
  out.d_alpha = 2.0 * (margin + mean_neg - mean_pos) - 2.0 * alpha;
  return out;
}

CeGrad ce_loss_grad(const TaskParams& p, const TaskDataset& d,
                    const std::vector<int>& batch) {
  if (batch.empty()) throw std::invalid_argument("ce_loss_grad: empty batch");
  CeGrad out;
  out.grad = zeros_like(p);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (int idx : batch) {
    const ScoreForward f = forward(p, d, idx);
    const double yl = d.labels[idx];
    const double t = -yl * f.h;
    out.loss += w * (t >= 0.0 ? t + std::log1p(std::exp(-t))
                              : std::log1p(std::exp(t)));
    const double psi = -yl * sigmoid(t);
    accumulate_score_grad(out.grad, p, f, w * psi);
  }
  return out;
}

TaskParams ce_hvp(const TaskParams& p, const TaskParams& dir,
                  const TaskDataset& d, const std::vector<int>& batch) {
  if (batch.empty()) throw std::invalid_argument("ce_hvp: empty batch");
  TaskParams out = zeros_like(p);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (int idx : batch) {
    const ScoreForward f = forward(p, d, idx);
    const double yl = d.labels[idx];
    const double sg = sigmoid(-yl * f.h);
    const double psi = -yl * sg;
    // forward-mode derivatives along `dir`
    const Eigen::VectorXd r_t = dir.encoder * f.x;
    const Eigen::VectorXd one_minus_z2 =
        (1.0 - f.z.array().square()).matrix();
    const Eigen::VectorXd r_z = one_minus_z2.cwiseProduct(r_t);
    const double r_h = dir.head.dot(f.z) + p.head.dot(r_z);
    const double r_psi = sg * (1.0 - sg) * r_h;
    out.head += w * (r_psi * f.z + psi * r_z);
    const Eigen::VectorXd gate = one_minus_z2.cwiseProduct(p.head);
    const Eigen::VectorXd r_gate =
        (-2.0 * f.z.cwiseProduct(r_z)).cwiseProduct(p.head) +
        one_minus_z2.cwiseProduct(dir.head);
    out.encoder += w * (r_psi * gate + psi * r_gate) * f.x.transpose();
  }
  return out;
}

TaskParams compositional_lower_step(const TaskParams& u, const TaskParams& w,
                                    const TaskDataset& d,
                                    const std::vector<int>& batch, double eta2,
                                    double eta_tilde) {
  const CeGrad g = ce_loss_grad(w, d, batch);
  TaskParams target = w;
  target.encoder -= eta_tilde * g.grad.encoder;
  target.head -= eta_tilde * g.grad.head;
  TaskParams out = u;
  out.encoder -= eta2 * (u.encoder - target.encoder);
  out.head -= eta2 * (u.head - target.head);
  return out;
}

void AucModelConfig::validate() const {
  if (encoder_dim <= 0)
    throw std::invalid_argument("model config: encoder_dim must be positive");
  if (eta_tilde <= 0.0)
    throw std::invalid_argument("model config: eta_tilde must be positive");
  if (init_scale <= 0.0)
    throw std::invalid_argument("model config: init_scale must be positive");
}

std::vector<int> two_class_batch(const TaskDataset& d, const RngStream& base,
                                 int batch_size) {
  const int n = static_cast<int>(d.labels.size());
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    RngStream r = base.fork(attempt);
    std::vector<int> batch = sample_data(r, n, batch_size);
    bool has_pos = false, has_neg = false;
    for (int idx : batch) (d.labels[idx] == 1 ? has_pos : has_neg) = true;
    if (has_pos && has_neg) return batch;
  }
  throw std::runtime_error(
      "two_class_batch: no two-class batch after 100 draws; grow the batch");
}

AucCtState init_auc_ct(const std::vector<TaskDataset>& data,
                       const AucModelConfig& mc, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("init_auc_ct: no tasks");
  mc.validate();
  const int dim = static_cast<int>(data[0].features.cols());
  for (const auto& d : data) {
    d.validate();
    if (d.features.cols() != dim)
      throw std::invalid_argument("init_auc_ct: feature width mismatch");
  }
  const int m = static_cast<int>(data.size());
  RngStream r = RngStream(seed).fork(stream_label::init);
  AucCtState st;
  st.w.encoder.resize(mc.encoder_dim, dim);
  for (int i = 0; i < mc.encoder_dim; ++i)
    for (int j = 0; j < dim; ++j) st.w.encoder(i, j) = mc.init_scale * r.gaussian();
  st.w.heads.resize(static_cast<std::size_t>(m));
  for (auto& h : st.w.heads) {
    h.resize(mc.encoder_dim);
    for (int j = 0; j < mc.encoder_dim; ++j) h[j] = mc.init_scale * r.gaussian();
  }
  st.u.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) st.u.push_back(task_params(st.w, k));
  st.a = Eigen::VectorXd::Zero(m);
  st.b = Eigen::VectorXd::Zero(m);
  st.alpha = Eigen::VectorXd::Zero(m);
  st.z_encoder = Eigen::MatrixXd::Zero(mc.encoder_dim, dim);
  st.z_heads.assign(static_cast<std::size_t>(m),
                    Eigen::VectorXd::Zero(mc.encoder_dim));
  st.z_a = Eigen::VectorXd::Zero(m);
  st.z_b = Eigen::VectorXd::Zero(m);
  return st;
}

bool step_auc_ct(AucCtState& st, const std::vector<TaskDataset>& data,
                 const AucModelConfig& mc, const RunConfig& cfg, long iter) {
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
  std::vector<std::pair<int, double>> new_alpha;
  std::vector<std::pair<int, TaskParams>> new_u;

  for (int k : tasks) {
    const auto ki = static_cast<std::size_t>(k);
    RngStream batch_base = root.at({stream_label::data,
                                    static_cast<std::uint64_t>(iter),
                                    static_cast<std::uint64_t>(k)});
    const std::vector<int> batch =
        two_class_batch(data[ki], batch_base, cfg.data_batch);
    const TaskParams w_k = task_params(st.w, k);
    const AucLossGrads lg = auc_minmax_loss(st.u[ki], st.a[k], st.b[k],
                                            st.alpha[k], mc.margin, data[ki],
                                            batch);
    TaskParams dw = lg.d_params;
    if (mc.exact_ce_hvp) {
      TaskParams corr = ce_hvp(w_k, lg.d_params, data[ki], batch);
      corr *= mc.eta_tilde;
      dw -= corr;
    }
    d_enc += inv_batch * dw.encoder;
    d_heads.emplace_back(k, inv_batch * dw.head);
    d_a[k] = inv_batch * lg.d_a;
    d_b[k] = inv_batch * lg.d_b;
    new_alpha.emplace_back(k, st.alpha[k] + cfg.eta1 * lg.d_alpha);
    new_u.emplace_back(k, compositional_lower_step(st.u[ki], w_k, data[ki],
                                                   batch, cfg.eta2,
                                                   mc.eta_tilde));
  }

  for (auto& [k, a] : new_alpha) st.alpha[k] = a;
  for (auto& [k, u] : new_u) st.u[static_cast<std::size_t>(k)] = std::move(u);

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
            st.alpha.allFinite();
  for (int k = 0; ok && k < m; ++k)
    ok = st.w.heads[static_cast<std::size_t>(k)].allFinite() &&
         st.u[static_cast<std::size_t>(k)].encoder.allFinite() &&
         st.u[static_cast<std::size_t>(k)].head.allFinite();
  return ok;
}

double mean_auc(const Scorer& s, const std::vector<TaskDataset>& data) {
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Eigen::VectorXd h = score_all(task_params(s, static_cast<int>(k)),
                                        data[k]);
    std::vector<double> scores(h.data(), h.data() + h.size());
    std::vector<int> labels(data[k].labels.data(),
                            data[k].labels.data() + data[k].labels.size());
    total += metric_auc(scores, labels);
  }
  return total / static_cast<double>(data.size());
}

namespace {

double full_surrogate(const AucCtState& st, const std::vector<TaskDataset>& data,
                      const AucModelConfig& mc) {
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    std::vector<int> all(static_cast<std::size_t>(data[k].labels.size()));
    std::iota(all.begin(), all.end(), 0);
    total += auc_minmax_loss(task_params(st.w, static_cast<int>(k)),
                             st.a[static_cast<Eigen::Index>(k)],
                             st.b[static_cast<Eigen::Index>(k)],
                             st.alpha[static_cast<Eigen::Index>(k)], mc.margin,
                             data[k], all)
                 .loss;
  }
  return total / static_cast<double>(data.size());
}

constexpr double kNanA = std::numeric_limits<double>::quiet_NaN();

}  // namespace

AppRunResult run_auc_ct(const std::vector<TaskDataset>& data,
                        const AucModelConfig& mc, const RunConfig& cfg,
                        const RunOptions& opts) {
  cfg.validate();
  if (cfg.data_batch < 2)
    throw std::invalid_argument("run_auc_ct: data_batch must be >= 2");
  if (cfg.block_batch > static_cast<int>(data.size()))
    throw std::invalid_argument("run_auc_ct: block_batch exceeds task count");
  if (opts.record_every < 1)
    throw std::invalid_argument("run_auc_ct: record_every must be >= 1");
  AucCtState st = init_auc_ct(data, mc, cfg.seed);
  AppRunResult res;
  res.best_metric = 0.0;
  const auto t_start = std::chrono::steady_clock::now();
  for (long t = 0; t < cfg.horizon; ++t) {
    const bool record = (t % opts.record_every == 0) || (t == cfg.horizon - 1);
    if (record) {
      TraceRecord rec;
      rec.iter = t;
      rec.F = full_surrogate(st, data, mc);
      rec.grad_norm_sq = rec.est_gap_sq = kNanA;
      rec.delta_y = rec.delta_alpha = rec.delta_h_or_v = kNanA;
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
      res.trace.push_back(rec);
      if (opts.on_record) opts.on_record(rec);
      res.final_metric = mean_auc(st.w, data);
      res.best_metric = std::max(res.best_metric, res.final_metric);
    }
    if (!step_auc_ct(st, data, mc, cfg, t)) {
      res.diverged = true;
      res.completed_iters = t;
      return res;
    }
    res.completed_iters = t + 1;
  }
  res.final_metric = mean_auc(st.w, data);
  res.best_metric = std::max(res.best_metric, res.final_metric);
  return res;
}

}  // namespace mmb
