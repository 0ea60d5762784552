// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned at the use sites.
#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mmb/auc.hpp"
#include "mmb/config.hpp"
#include "mmb/dataset.hpp"
#include "mmb/experiment.hpp"
#include "mmb/hypergradient.hpp"
#include "mmb/optimizer.hpp"
#include "mmb/pauc.hpp"
#include "mmb/problem.hpp"
#include "mmb/rng.hpp"

using namespace mmb;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

VectorXd random_vector(RngStream r, int n) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = r.gaussian();
  return v;
}

// ---------------------------------------------------------------- criterion 1
// Exact hypergradient vs central finite differences on random instances.
bool crit_hypergradient_fd(std::string& detail) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto p = synth_generate(seed, ProblemDims{8, 10, 5, 1},
                                  SmoothnessProfile{}, 0.1);
    const VectorXd x = random_vector(RngStream(seed).fork(901), 10);
    const GradCheckReport rep = check_gradient(p, x);
    worst = std::max(worst, rep.rel_error);
  }
  const double el = seconds_since(t0);
  detail = fmt("max rel error %.2e, %.2f s", worst, el);
  return worst <= 1e-5 && el < 5.0;
}

// ---------------------------------------------------------------- criterion 2
// At the solved state with exact curvature both estimators reproduce the
// closed-form gradient.
bool crit_estimator_fixed_point(std::string& detail) {
  SmoothnessProfile prof;  // sigma = 0
  const auto p = synth_generate(33, ProblemDims{8, 10, 5, 1}, prof, 0.1);
  const VectorXd x = random_vector(RngStream(44), 10);

  StateV1 s1 = init_state_v1(p);
  StateV2 s2 = init_state_v2(p);
  s1.x = x;
  s2.x = x;
  for (int i = 0; i < 8; ++i) {
    const double astar = p.dual_solution(i, x);
    const VectorXd ystar = p.lower_solution(i, x);
    s1.alpha[i] = VectorXd::Constant(1, astar);
    s1.y[i] = ystar;
    s1.s[i] = p.hess_yy_g(i);
    s1.h_inv[i] = s1.s[i].inverse();
    s2.alpha[i] = VectorXd::Constant(1, astar);
    s2.y[i] = ystar;
    s2.v[i] = p.hess_yy_g(i).llt().solve(p.grad_y_f(i, astar));
  }
  RunConfig cfg;
  cfg.block_batch = 8;
  cfg.data_batch = 1;
  std::vector<int> blocks(8);
  std::iota(blocks.begin(), blocks.end(), 0);
  const VectorXd g = exact_grad_F(p, x);
  const VectorXd e1 =
      hypergradient_estimate_v1(p, s1, blocks, cfg, RngStream(7), 0);
  const VectorXd e2 =
      hypergradient_estimate_v2(p, s2, blocks, cfg, RngStream(7), 0);
  const double err =
      std::max((e1 - g).lpNorm<Eigen::Infinity>(), (e2 - g).lpNorm<Eigen::Infinity>());
  detail = fmt("max deviation %.2e", err);
  return err <= 1e-10;
}

// ---------------------------------------------------------------- criterion 3
// Monte Carlo mean of the stochastic direction matches the plug-in gradient
// at a frozen state, within 4 standard errors per coordinate.
bool crit_estimator_unbiased(std::string& detail) {
  SmoothnessProfile prof;
  prof.sigma = 0.5;
  const auto p = synth_generate(7, ProblemDims{8, 10, 5, 1}, prof, 0.1);
  const int m = 8, dx = 10, dy = 5;
  RngStream r(99);

  StateV1 s1 = init_state_v1(p);
  StateV2 s2 = init_state_v2(p);
  s1.x = random_vector(r.fork(0), dx);
  s2.x = s1.x;
  for (int i = 0; i < m; ++i) {
    const double a = r.fork(100 + i).gaussian();
    s1.alpha[i] = VectorXd::Constant(1, a);
    s2.alpha[i] = s1.alpha[i];
    s1.y[i] = random_vector(r.fork(200 + i), dy);
    s2.y[i] = s1.y[i];
    s1.s[i] = p.hess_yy_g(i) + 0.1 * MatrixXd::Identity(dy, dy);
    s1.h_inv[i] = s1.s[i].inverse();
    s2.v[i] = random_vector(r.fork(300 + i), dy);
  }
  VectorXd expect1 = VectorXd::Zero(dx), expect2 = VectorXd::Zero(dx);
  for (int i = 0; i < m; ++i) {
    const double a = s1.alpha[i][0];
    const VectorXd gx = p.grad_x_f(i, s1.x, a, s1.y[i]);
    const VectorXd gy = p.grad_y_f(i, a);
    const MatrixXd jac = p.jac_xy_g(i);
    expect1 += gx - jac * (s1.h_inv[i] * gy);
    expect2 += gx - jac * s2.v[i];
  }
  expect1 /= m;
  expect2 /= m;

  RunConfig cfg;
  cfg.block_batch = 2;
  cfg.data_batch = 4;
  cfg.independent_product_batches = true;

  const int n = 10000;
  double worst_sigmas = 0.0;
  for (int variant = 0; variant < 2; ++variant) {
    VectorXd sum = VectorXd::Zero(dx), sumsq = VectorXd::Zero(dx);
    for (int t = 0; t < n; ++t) {
      const RngStream root = RngStream(500).fork(2000 * variant + t);
      RngStream bs = root.at({stream_label::blocks, 0});
      const std::vector<int> blocks = sample_blocks(bs, m, cfg.block_batch);
      const VectorXd d =
          variant == 0
              ? hypergradient_estimate_v1(p, s1, blocks, cfg, root, 0)
              : hypergradient_estimate_v2(p, s2, blocks, cfg, root, 0);
      sum += d;
      sumsq += d.cwiseProduct(d);
    }
    const VectorXd mean = sum / n;
    const VectorXd& expect = variant == 0 ? expect1 : expect2;
    for (int c = 0; c < dx; ++c) {
      const double var =
          std::max((sumsq[c] - n * mean[c] * mean[c]) / (n - 1), 0.0);
      const double se = std::sqrt(var / n) + 1e-15;
      worst_sigmas = std::max(worst_sigmas, std::abs(mean[c] - expect[c]) / se);
    }
  }
  detail = fmt("worst coordinate at %.2f standard errors", worst_sigmas);
  return worst_sigmas <= 4.0;
}

// A decoupled single-block instance: q = 0 makes the alpha, y and v
// recursions independent, and the diagonal A makes unit-axis error vectors
// eigendirections, so contraction factors are exact scalars.
SyntheticQuadraticProblem decoupled_problem() {
  SyntheticBlock b;
  b.A = Eigen::Vector3d(1.0, 1.5, 2.0).asDiagonal();
  b.B = (MatrixXd(3, 2) << 0.5, -0.3, 0.2, 0.8, -0.6, 0.1).finished();
  b.c = Eigen::Vector3d(0.3, -0.2, 0.5);
  b.p = Eigen::Vector2d(1.0, -0.5);
  b.q = Eigen::Vector3d::Zero();
  b.r = 0.7;
  b.M = MatrixXd::Identity(2, 2);
  b.s = Eigen::Vector3d(0.2, 0.4, -0.3);
  return SyntheticQuadraticProblem(ProblemDims{1, 2, 3, 1},
                                   SmoothnessProfile{}, {b});
}

// ---------------------------------------------------------------- criterion 4
// Frozen-x noiseless full-batch runs contract the y, alpha and v errors by
// exactly (1 - eta * modulus) per step.
bool crit_inner_contraction(std::string& detail) {
  const auto p = decoupled_problem();
  const VectorXd x0 = Eigen::Vector2d(0.4, -0.7);
  const VectorXd e1 = Eigen::Vector3d(1.0, 0.0, 0.0);  // eigenvalue-1 axis
  const VectorXd ystar = p.lower_solution(0, x0);
  const double astar = p.dual_solution(0, x0);

  RunConfig cfg;
  cfg.eta0 = 0.0;  // freeze x
  cfg.eta1 = cfg.eta2 = cfg.eta3 = 0.02;
  cfg.beta0 = 0.5;
  cfg.beta1 = 0.5;
  cfg.block_batch = 1;
  cfg.data_batch = 1;
  const double fy = 1.0 - cfg.eta2 * 1.0;  // modulus: smallest eigenvalue of A
  const double fa = 1.0 - cfg.eta1 * p.profile().mu_f;
  const double fv = 1.0 - cfg.eta3 * 1.0;

  StateV1 s1 = init_state_v1(p);
  s1.x = x0;
  s1.y[0] = ystar + e1;
  s1.alpha[0] = VectorXd::Constant(1, astar + 1.0);
  s1.s[0] = p.hess_yy_g(0);
  s1.h_inv[0] = s1.s[0].inverse();

  StateV2 s2 = init_state_v2(p);
  s2.x = x0;
  s2.y[0] = ystar + e1;
  s2.alpha[0] = VectorXd::Constant(1, astar + 1.0);
  const VectorXd vstar = p.hess_yy_g(0).llt().solve(p.grad_y_f(0, astar));
  s2.v[0] = vstar + e1;

  double worst = 0.0;
  bool ok = true;
  double ey = 1.0, ea = 1.0, ev = 1.0;
  for (long t = 0; t < 50; ++t) {
    ok = ok && step_v1(p, s1, cfg, t) && step_v2(p, s2, cfg, t);
    ey *= fy;
    ea *= fa;
    ev *= fv;
    const double checks[5] = {
        std::abs((s1.y[0] - ystar).norm() - ey) - 1e-10 * ey,
        std::abs(std::abs(s1.alpha[0][0] - astar) - ea) - 1e-10 * ea,
        std::abs((s2.y[0] - ystar).norm() - ey) - 1e-10 * ey,
        std::abs(std::abs(s2.alpha[0][0] - astar) - ea) - 1e-10 * ea,
        std::abs((s2.v[0] - vstar).norm() - ev) - 1e-10 * ev,
    };
    for (double c : checks) worst = std::max(worst, c);
  }
  ok = ok && worst <= 1e-12;
  ok = ok && (s1.x.array() == x0.array()).all() &&
       (s2.x.array() == x0.array()).all();
  detail = fmt("worst factor deviation beyond rel 1e-10: %.2e", worst);
  return ok;
}

// ---------------------------------------------------------------- criterion 5
// Hessian momentum halves the estimate error exactly at beta1 = 1/2 with
// exact samples, and its smallest eigenvalue never drops below mu_g.
bool crit_hessian_momentum(std::string& detail) {
  SmoothnessProfile prof;  // sigma = 0
  const auto p = synth_generate(3, ProblemDims{4, 6, 5, 1}, prof, 0.1);
  const int m = 4;
  RunConfig cfg;
  cfg.eta0 = 0.0;
  cfg.eta1 = cfg.eta2 = cfg.eta3 = 0.1;
  cfg.beta0 = 0.5;
  cfg.beta1 = 0.5;
  cfg.block_batch = m;  // every block updates every iteration
  cfg.data_batch = 1;

  StateV1 st = init_state_v1(p);
  double e0 = 0.0;
  for (int i = 0; i < m; ++i)
    e0 += (st.s[i] - p.hess_yy_g(i)).squaredNorm();
  e0 = std::sqrt(e0);

  double worst = 0.0;
  double expected = e0;
  for (long t = 0; t < 50; ++t) {
    step_v1(p, st, cfg, t);
    expected *= 0.5;
    double et = 0.0;
    for (int i = 0; i < m; ++i)
      et += (st.s[i] - p.hess_yy_g(i)).squaredNorm();
    et = std::sqrt(et);
    worst = std::max(worst, std::abs(et - expected) - 1e-10 * expected);
  }
  const bool halving_ok = worst <= 1e-12;

  // Stochastic runs: clamped samples keep every s_i at least mu_g.
  SmoothnessProfile noisy;
  noisy.mu_g = 1.5;
  noisy.L_g = 3.0;
  noisy.sigma = 2.0;
  const auto pn = synth_generate(5, ProblemDims{4, 6, 5, 1}, noisy, 0.1);
  RunConfig cn;
  cn.eta0 = 0.05;
  cn.eta1 = cn.eta2 = cn.eta3 = 0.1;
  cn.beta1 = 0.5;
  cn.block_batch = 2;
  cn.data_batch = 2;
  double min_eig = 1e300;
  for (std::uint64_t seed : {1ull, 2ull}) {
    cn.seed = seed;
    StateV1 sn = init_state_v1(pn);
    for (long t = 0; t < 100; ++t) {
      step_v1(pn, sn, cn, t);
      for (int i = 0; i < m; ++i) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sn.s[i],
                                                   Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
      }
    }
  }
  const bool psd_ok = min_eig >= noisy.mu_g - 1e-10;
  detail = fmt("halving deviation %.2e, stochastic min eigenvalue %.12f",
               worst, min_eig);
  return halving_ok && psd_ok;
}

// ---------------------------------------------------------------- criterion 6
// Tuned constant-step runs reach running-min squared gradient norm 1e-3
// within 20000 iterations for both variants, five seeds each.
bool crit_stochastic_convergence(std::string& detail) {
  SmoothnessProfile prof;
  prof.sigma = 0.1;
  const auto p = synth_generate(11, ProblemDims{8, 10, 5, 1}, prof, 0.1);
  RunConfig cfg;
  cfg.eta0 = 0.01;
  cfg.eta1 = cfg.eta2 = cfg.eta3 = 0.3;
  cfg.beta0 = 0.25;
  cfg.beta1 = 0.5;
  cfg.block_batch = 8;
  cfg.data_batch = 16;
  cfg.horizon = 20000;
  RunOptions opts;
  opts.record_every = 10;

  double worst_min = 0.0, worst_time = 0.0;
  for (Variant variant : {Variant::v1, Variant::v2}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      cfg.seed = seed;
      const auto t0 = Clock::now();
      const RunResult rr = run(p, cfg, variant, opts);
      const double el = seconds_since(t0);
      if (rr.diverged) {
        detail = "a run diverged";
        return false;
      }
      double running_min = 1e300;
      for (const auto& rec : rr.trace)
        if (std::isfinite(rec.grad_norm_sq))
          running_min = std::min(running_min, rec.grad_norm_sq);
      worst_min = std::max(worst_min, running_min);
      worst_time = std::max(worst_time, el);
    }
  }
  detail = fmt("worst running-min %.2e, slowest run %.1f s", worst_min,
               worst_time);
  return worst_min <= 1e-3 && worst_time < 60.0;
}

// ---------------------------------------------------------------- criterion 7
// Mean iterations to reach squared gradient norm 1e-2 is non-increasing in
// each batch-size axis (up to one inversion within a pooled standard
// deviation).
struct CellStats {
  double mean = 0.0;
  double sd = 0.0;
  bool all_reached = true;
};

CellStats batch_cell(const SyntheticQuadraticProblem& p, RunConfig cfg,
                     int block_batch, int data_batch) {
  cfg.block_batch = block_batch;
  cfg.data_batch = data_batch;
  // Larger batches buy larger stable step sizes, so scale the upper step
  // with the product batch and the momentum with the smaller batch, capped
  // where eta0 * lmax / beta0 would endanger stability.
  const double scale = block_batch * data_batch / 32.0;
  cfg.eta0 = std::min(0.01 * scale, 0.015);
  cfg.beta0 = std::min(0.25 * std::min(block_batch, data_batch) / 4.0, 0.25);
  RunOptions opts;
  opts.record_every = 5;
  CellStats out;
  std::vector<double> iters;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const RunResult rr = run(p, cfg, Variant::v1, opts);
    long itt = -1;
    for (const auto& rec : rr.trace)
      if (std::isfinite(rec.grad_norm_sq) && rec.grad_norm_sq <= 1e-2) {
        itt = rec.iter;
        break;
      }
    if (itt < 0) out.all_reached = false;
    iters.push_back(static_cast<double>(itt));
  }
  double mean = 0.0;
  for (double v : iters) mean += v;
  mean /= iters.size();
  double var = 0.0;
  for (double v : iters) var += (v - mean) * (v - mean);
  var /= (iters.size() - 1);
  out.mean = mean;
  out.sd = std::sqrt(var);
  return out;
}

bool monotone_with_slack(const std::vector<CellStats>& cells) {
  int inversions = 0;
  for (std::size_t k = 0; k + 1 < cells.size(); ++k) {
    if (cells[k + 1].mean > cells[k].mean) {
      ++inversions;
      const double pooled = std::sqrt(
          (cells[k].sd * cells[k].sd + cells[k + 1].sd * cells[k + 1].sd) / 2);
      if (cells[k + 1].mean - cells[k].mean > pooled) return false;
    }
  }
  return inversions <= 1;
}

bool crit_batch_scaling(std::string& detail) {
  SmoothnessProfile prof;
  prof.sigma = 0.15;
  const auto p = synth_generate(24, ProblemDims{8, 10, 5, 1}, prof, 1.0);
  RunConfig cfg;
  cfg.eta1 = cfg.eta2 = cfg.eta3 = 0.3;
  cfg.beta1 = 0.5;
  cfg.horizon = 12000;

  std::vector<CellStats> axis_blocks, axis_data;
  for (int I : {1, 2, 4, 8}) axis_blocks.push_back(batch_cell(p, cfg, I, 4));
  for (int B : {1, 4, 16}) axis_data.push_back(batch_cell(p, cfg, 8, B));

  bool reached = true;
  std::ostringstream ss;
  ss << "block-axis means";
  for (const auto& c : axis_blocks) {
    ss << " " << c.mean;
    reached = reached && c.all_reached;
  }
  ss << "; data-axis means";
  for (const auto& c : axis_data) {
    ss << " " << c.mean;
    reached = reached && c.all_reached;
  }
  detail = ss.str();
  return reached && monotone_with_slack(axis_blocks) &&
         monotone_with_slack(axis_data);
}

// ---------------------------------------------------------------- criterion 8
// Rank-sum AUC equals brute-force pair enumeration exactly; rho = 1 partial
// AUC equals the full metric; the worked example reproduces.
double brute_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double total = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] != 1 || l[j] != -1) continue;
      ++pairs;
      if (s[i] > s[j])
        total += 1.0;
      else if (s[i] == s[j])
        total += 0.5;
    }
  return total / static_cast<double>(pairs);
}

bool crit_ranking_metrics(std::string& detail) {
  for (int k = 0; k < 100; ++k) {
    RngStream r(3000 + k);
    const int n = 4 + static_cast<int>(r.below(30));
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = (k % 2 == 0) ? 0.25 * static_cast<double>(r.below(7))
                          : r.gaussian();
      l[i] = r.uniform() < 0.5 ? 1 : -1;
    }
    l[0] = 1;
    l[1] = -1;
    if (metric_auc(s, l) != brute_auc(s, l)) {
      detail = fmt("rank-sum mismatch on instance %d", k);
      return false;
    }
    if (metric_pauc(s, l, 1.0) != metric_auc(s, l)) {
      detail = fmt("rho=1 partial metric mismatch on instance %d", k);
      return false;
    }
  }
  const std::vector<double> s{0.9, 0.4, 0.6, 0.1};
  const std::vector<int> l{1, 1, -1, -1};
  const double auc = metric_auc(s, l);
  const double pauc = metric_pauc(s, l, 0.5);
  detail = fmt("worked example auc %.2f, pauc %.2f", auc, pauc);
  return auc == 0.75 && pauc == 0.5;
}

// ---------------------------------------------------------------- criterion 9
// The quantile lower problem: plain gradient descent and bisection agree,
// and both land next to the K+1-th largest score.
bool crit_quantile_solve(std::string& detail) {
  PaucConfig pc;
  pc.tau1 = 1e-3;
  pc.tau2 = 1e-6;
  pc.epsilon_smooth = 0.01;
  VectorXd neg(3);
  neg << 3.0, 2.0, 1.0;
  const double by_bisection = pauc_lambda_solve(neg, 1, 3, pc);
  double lam = 0.0;
  for (int t = 0; t < 5000; ++t)
    lam -= 0.005 * pauc_lambda_grad(lam, neg, 1, 3, pc);
  detail = fmt("sgd %.6f, bisection %.6f", lam, by_bisection);
  return std::abs(lam - by_bisection) <= 1e-4 &&
         std::abs(by_bisection - 2.0) <= 0.01 && std::abs(lam - 2.0) <= 0.01;
}

// --------------------------------------------------------------- criterion 10
// Finite-difference checks of every hand-derived application gradient, and
// the phi == 1 limit of the partial-AUC surrogate against the full-AUC one.
TaskDataset random_dataset(RngStream r, int n, int dim, int n_pos) {
  TaskDataset d;
  d.features.resize(n, dim);
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) d.features(i, j) = r.gaussian();
    d.labels[i] = i < n_pos ? 1 : -1;
  }
  return d;
}

TaskParams random_params(RngStream r, int e, int dim) {
  TaskParams p;
  p.encoder.resize(e, dim);
  p.head.resize(e);
  for (int i = 0; i < e; ++i) {
    for (int j = 0; j < dim; ++j) p.encoder(i, j) = 0.4 * r.gaussian();
    p.head[i] = 0.4 * r.gaussian();
  }
  return p;
}

TaskParams fd_over_params(const TaskParams& at,
                          const std::function<double(const TaskParams&)>& f,
                          double h) {
  TaskParams g = at;
  for (int i = 0; i < at.encoder.rows(); ++i)
    for (int j = 0; j < at.encoder.cols(); ++j) {
      TaskParams hi = at, lo = at;
      hi.encoder(i, j) += h;
      lo.encoder(i, j) -= h;
      g.encoder(i, j) = (f(hi) - f(lo)) / (2 * h);
    }
  for (int i = 0; i < at.head.size(); ++i) {
    TaskParams hi = at, lo = at;
    hi.head[i] += h;
    lo.head[i] -= h;
    g.head[i] = (f(hi) - f(lo)) / (2 * h);
  }
  return g;
}

double params_rel_diff(const TaskParams& a, const TaskParams& b) {
  TaskParams d = a;
  d -= b;
  return std::sqrt(d.squared_norm()) / std::max(1.0, std::sqrt(b.squared_norm()));
}

bool crit_surrogate_gradients(std::string& detail) {
  const TaskDataset d = random_dataset(RngStream(81), 12, 5, 4);
  const TaskParams p0 = random_params(RngStream(82), 3, 5);
  std::vector<int> batch(12);
  std::iota(batch.begin(), batch.end(), 0);
  std::vector<int> pos, neg;
  for (int i = 0; i < 12; ++i) (d.labels[i] == 1 ? pos : neg).push_back(i);
  const double h = 1e-6;
  double worst = 0.0;
  auto scalar_fd = [&](const std::function<double(double)>& f, double at) {
    return (f(at + h) - f(at - h)) / (2 * h);
  };

  {  // min-max square surrogate
    const double a = 0.3, b = -0.2, alpha = 0.4, margin = 1.0;
    const AucLossGrads g = auc_minmax_loss(p0, a, b, alpha, margin, d, batch);
    const TaskParams fd = fd_over_params(
        p0,
        [&](const TaskParams& q) {
          return auc_minmax_loss(q, a, b, alpha, margin, d, batch).loss;
        },
        h);
    worst = std::max(worst, params_rel_diff(fd, g.d_params));
    worst = std::max(worst, std::abs(scalar_fd(
                                [&](double v) {
                                  return auc_minmax_loss(p0, v, b, alpha,
                                                         margin, d, batch)
                                      .loss;
                                },
                                a) -
                            g.d_a) /
                                std::max(1.0, std::abs(g.d_a)));
    worst = std::max(worst, std::abs(scalar_fd(
                                [&](double v) {
                                  return auc_minmax_loss(p0, a, v, alpha,
                                                         margin, d, batch)
                                      .loss;
                                },
                                b) -
                            g.d_b) /
                                std::max(1.0, std::abs(g.d_b)));
    worst = std::max(worst, std::abs(scalar_fd(
                                [&](double v) {
                                  return auc_minmax_loss(p0, a, b, v, margin,
                                                         d, batch)
                                      .loss;
                                },
                                alpha) -
                            g.d_alpha) /
                                std::max(1.0, std::abs(g.d_alpha)));
  }

  {  // logistic loss
    const CeGrad g = ce_loss_grad(p0, d, batch);
    const TaskParams fd = fd_over_params(
        p0, [&](const TaskParams& q) { return ce_loss_grad(q, d, batch).loss; },
        h);
    worst = std::max(worst, params_rel_diff(fd, g.grad));
  }

  {  // quantile objective derivatives
    PaucConfig pc;
    pc.tau1 = 0.1;
    VectorXd scores = random_vector(RngStream(83), 6);
    for (double lam : {0.1, 0.35}) {
      const double gfd = scalar_fd(
          [&](double v) { return pauc_lambda_value(v, scores, 2, 6, pc); },
          lam);
      const double g = pauc_lambda_grad(lam, scores, 2, 6, pc);
      worst = std::max(worst, std::abs(gfd - g) / std::max(1.0, std::abs(g)));
      const double hfd = scalar_fd(
          [&](double v) { return pauc_lambda_grad(v, scores, 2, 6, pc); },
          lam);
      const double hh = pauc_lambda_hess(lam, scores, pc);
      worst = std::max(worst, std::abs(hfd - hh) / std::max(1.0, std::abs(hh)));
    }
  }

  {  // partial-AUC surrogate with the frozen quantities pinned
    PaucConfig pc;
    pc.rho = 0.5;
    pc.tau1 = 0.5;
    const double a = 0.3, b = -0.1, alpha = 0.4, lambda = 0.2;
    const double H = pc.tau2 + 0.25 / pc.tau1;
    const VectorXd ns = score_batch(p0, d, neg);
    const PaucFrozen fr = pauc_freeze(ns, lambda, b, H, pc);
    const PaucGGrads g =
        pauc_g_grad(p0, a, b, alpha, d, pos, neg, lambda, fr, pc);
    const TaskParams fd = fd_over_params(
        p0,
        [&](const TaskParams& q) {
          return pauc_g_value(q, a, b, alpha, d, pos, neg, lambda, fr, pc);
        },
        h);
    worst = std::max(worst, params_rel_diff(fd, g.d_params));
    worst = std::max(
        worst,
        std::abs(scalar_fd(
                     [&](double v) {
                       return pauc_g_value(p0, v, b, alpha, d, pos, neg,
                                           lambda, fr, pc);
                     },
                     a) -
                 g.d_a) /
            std::max(1.0, std::abs(g.d_a)));
    worst = std::max(
        worst,
        std::abs(scalar_fd(
                     [&](double v) {
                       return pauc_g_value(p0, a, v, alpha, d, pos, neg,
                                           lambda, fr, pc);
                     },
                     b) -
                 g.d_b) /
            std::max(1.0, std::abs(g.d_b)));
  }

  // phi == 1 limit: with every negative kept and the threshold far below
  // the scores, the partial surrogate reduces to the full-AUC one.
  double limit_gap = 0.0;
  {
    PaucConfig pc;
    pc.rho = 1.0;
    pc.tau1 = 0.5;
    const double a = 0.3, b = -0.1, alpha = 0.4, lambda = -1e6;
    const double H = pc.tau2 + 0.25 / pc.tau1;
    const VectorXd ns = score_batch(p0, d, neg);
    const PaucFrozen fr = pauc_freeze(ns, lambda, b, H, pc);
    const PaucGGrads g =
        pauc_g_grad(p0, a, b, alpha, d, pos, neg, lambda, fr, pc);
    const AucLossGrads ref =
        auc_minmax_loss(p0, a, b, alpha, pc.margin, d, batch);
    TaskParams dp = g.d_params;
    dp -= ref.d_params;
    limit_gap = std::max({std::sqrt(dp.squared_norm()),
                          std::abs(g.value - (ref.loss + alpha * alpha)),
                          std::abs(g.d_a - ref.d_a), std::abs(g.d_b - ref.d_b),
                          std::abs(g.d_alpha - ref.d_alpha)});
  }
  detail = fmt("worst fd rel %.2e, phi=1 limit gap %.2e", worst, limit_gap);
  return worst <= 1e-5 && limit_gap <= 1e-8;
}

// --------------------------------------------------------------- criterion 11
// Both applications drive their training metric to 0.99 on separable
// two-task data within 2000 iterations.
bool crit_application_training(std::string& detail) {
  const auto data = make_separable_tasks(5, 2, 500, 10, 0.1, 1.0);
  AucModelConfig mc;
  RunConfig cfg;
  cfg.eta0 = 0.1;
  cfg.eta1 = cfg.eta2 = cfg.eta3 = 0.3;
  cfg.beta0 = 0.2;
  cfg.beta1 = 0.5;
  cfg.block_batch = 2;
  cfg.data_batch = 32;
  cfg.horizon = 2000;
  cfg.seed = 1;
  RunOptions opts;
  opts.record_every = 25;

  auto t0 = Clock::now();
  const AppRunResult auc_run = run_auc_ct(data, mc, cfg, opts);
  const double el_auc = seconds_since(t0);

  PaucConfig pc;
  pc.rho = 0.5;
  t0 = Clock::now();
  const AppRunResult pauc_run = run_pauc(data, mc, pc, cfg, opts);
  const double el_pauc = seconds_since(t0);

  detail = fmt("auc %.4f in %.1f s, pauc %.4f in %.1f s", auc_run.best_metric,
               el_auc, pauc_run.best_metric, el_pauc);
  return !auc_run.diverged && !pauc_run.diverged &&
         auc_run.best_metric >= 0.99 && pauc_run.best_metric >= 0.99 &&
         el_auc < 30.0 && el_pauc < 30.0;
}

// --------------------------------------------------------------- criterion 12
// Identical configs give byte-identical trace files, and serialization is a
// fixpoint of parse-then-serialize.
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool crit_harness_determinism(std::string& detail) {
  const std::string dir = "acceptance_scratch";
  std::filesystem::remove_all(dir);
  auto cfg = ExperimentConfig::from_json_string(
      R"({"kind":"synthetic-v2",
          "problem":{"blocks":3,"d_x":4,"d_y":3,"sigma":0.1},
          "run":{"eta0":0.05,"beta0":0.2,"horizon":300,"seed":5},
          "record_every":20})");
  cfg.out_dir = dir;
  const RunSummary r1 = run_experiment(cfg);
  const std::string bytes1 = slurp(r1.trace_path);
  const RunSummary r2 = run_experiment(cfg);
  const std::string bytes2 = slurp(r2.trace_path);
  std::filesystem::remove_all(dir);
  const bool traces_equal = !bytes1.empty() && bytes1 == bytes2;

  bool fixpoint = true;
  for (const char* s :
       {R"({"kind":"synthetic-v1"})",
        R"({"kind":"synthetic-v2","run":{"eta0":0.01},"sweep":{"seeds":[1,2]}})",
        R"({"kind":"auc-ct","data":{"generate":{}}})",
        R"({"kind":"pauc","data":{"generate":{"tasks":3}},"pauc":{"rho":0.3}})"}) {
    const std::string one = ExperimentConfig::from_json_string(s).to_json();
    const std::string two = ExperimentConfig::from_json_string(one).to_json();
    fixpoint = fixpoint && one == two;
  }
  detail = fmt("traces %s, serialization fixpoint %s",
               traces_equal ? "identical" : "differ",
               fixpoint ? "holds" : "broken");
  return traces_equal && fixpoint;
}

}  // namespace

int main() {
  struct Criterion {
    const char* label;
    bool (*fn)(std::string&);
  };
  const Criterion table[] = {
      {"hypergradient-fd", crit_hypergradient_fd},
      {"estimator-fixed-point", crit_estimator_fixed_point},
      {"estimator-unbiased", crit_estimator_unbiased},
      {"inner-contraction", crit_inner_contraction},
      {"hessian-momentum", crit_hessian_momentum},
      {"stochastic-convergence", crit_stochastic_convergence},
      {"batch-scaling", crit_batch_scaling},
      {"ranking-metrics", crit_ranking_metrics},
      {"quantile-solve", crit_quantile_solve},
      {"surrogate-gradients", crit_surrogate_gradients},
      {"application-training", crit_application_training},
      {"harness-determinism", crit_harness_determinism},
  };
  int failures = 0;
  int index = 0;
  for (const auto& c : table) {
    ++index;
    std::string detail;
    bool pass = false;
    try {
      pass = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion-%d %s (%s)\n", pass ? "PASS" : "FAIL", index,
                c.label, detail.c_str());
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
