#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mmb/problem.hpp"
#include "mmb/rng.hpp"

namespace mmb {

/// Step sizes and batch sizes for the single-loop solvers.
struct RunConfig {
  double eta0 = 0.05;   // x step (applied to the momentum average)
  double eta1 = 0.3;    // alpha ascent step
  double eta2 = 0.3;    // y descent step
  double eta3 = 0.3;    // v step (second variant only)
  double beta0 = 0.1;   // momentum weight on the hypergradient average
  double beta1 = 0.5;   // momentum weight on the Hessian average
  int block_batch = 1;  // |I_t|
  int data_batch = 1;   // |B|
  long horizon = 1000;  // T
  std::uint64_t seed = 1;
  /// Radius of the ball the v iterates are projected onto; <= 0 derives
  /// C_f / mu_g from the problem profile.
  double gamma_radius = 0.0;
  /// Draw a second, independent data batch for the lower-level gradient
  /// factor inside the hypergradient product.
  bool independent_product_batches = true;
  void validate() const;
};

/// Step sizes matching the convergence guarantees for target accuracy
/// epsilon, with all unknown proportionality constants set to one:
/// eta1 = eta2 = eta3 = beta1 = |B| eps^2,
/// beta0 = min(|I|,|B|) eps^2,
/// eta0 = min( min(|I|,|B|) eps^2, |B||I| eps^2 / m ),
/// horizon = ceil( max( m / (|I||B| eps^4), 1 / (min(|I|,|B|) eps^4) ) ).
/// Momentum weights and step sizes are additionally capped at 1.
RunConfig theorem_step_sizes(double epsilon, int block_batch, int data_batch,
                             int m);

/// Iterates of the first variant. h_inv[i] is kept equal to the inverse of
/// s[i] at all times.
struct StateV1 {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  std::vector<Eigen::VectorXd> alpha;
  std::vector<Eigen::VectorXd> y;
  std::vector<Eigen::MatrixXd> s;
  std::vector<Eigen::MatrixXd> h_inv;
};

/// Iterates of the second variant; v[i] tracks the solution of the
/// quadratic auxiliary problem in place of an explicit Hessian inverse.
struct StateV2 {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  std::vector<Eigen::VectorXd> alpha;
  std::vector<Eigen::VectorXd> y;
  std::vector<Eigen::VectorXd> v;
};

/// x = z = 0, alpha = projection of 0, y = 0, s = mu_g I (so h_inv = I/mu_g).
StateV1 init_state_v1(const Problem& p);
/// x = z = 0, alpha = projection of 0, y = 0, v = 0.
StateV2 init_state_v2(const Problem& p);

enum class Variant { v1, v2 };

Eigen::VectorXd project_dual(const Eigen::VectorXd& alpha, const DualSet& set);
/// Euclidean projection onto the centered ball of the given radius.
Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius);
/// (1 - beta) z + beta delta.
Eigen::VectorXd moving_average(const Eigen::VectorXd& z,
                               const Eigen::VectorXd& delta, double beta);

/// Hessian momentum for one selected block: s' = (1-beta1) s + beta1 sample,
/// h_inv' = inverse of s'. Unselected blocks are left untouched by the step
/// function, not by this op.
void hessian_momentum_update(Eigen::MatrixXd& s, Eigen::MatrixXd& h_inv,
                             const Eigen::MatrixXd& sample, double beta1);

/// One projected gradient step on the quadratic auxiliary objective
/// (1/2) v'Hv - v'b at the current v: v' = proj( v - eta3 (H v - b) ).
Eigen::VectorXd v_update(const Eigen::VectorXd& v, const Eigen::MatrixXd& hess_sample,
                         const Eigen::VectorXd& grad_y_f_sample, double eta3,
                         double radius);

/// Averaged stochastic hypergradient over the given block batch, evaluated
/// at the current iterates with the stored (pre-update) inverse estimates:
///   (1/|I|) sum_i [ grad_x f_i - jac_xy g_i * H_i * grad_y f_i ].
/// Batches and oracle noise come from substreams of `run_root` labeled by
/// (purpose, iter, block), so the result is independent of evaluation order
/// and reproducible from (seed, iter) alone.
Eigen::VectorXd hypergradient_estimate_v1(const Problem& p, const StateV1& st,
                                          const std::vector<int>& blocks,
                                          const RunConfig& cfg,
                                          const RngStream& run_root, long iter);
/// Same estimator with H_i grad_y f_i replaced by the stored v_i.
Eigen::VectorXd hypergradient_estimate_v2(const Problem& p, const StateV2& st,
                                          const std::vector<int>& blocks,
                                          const RunConfig& cfg,
                                          const RngStream& run_root, long iter);

/// One full iteration. All oracle evaluations use the pre-step iterates;
/// per-block updates commit only after every quantity for that block has
/// been computed. Returns false if a non-finite value appeared.
bool step_v1(const Problem& p, StateV1& st, const RunConfig& cfg, long iter);
bool step_v2(const Problem& p, StateV2& st, const RunConfig& cfg, long iter);

/// One trace row. Fields that have no value for the run at hand are NaN.
struct TraceRecord {
  long iter = 0;
  double F = 0.0;
  double grad_norm_sq = 0.0;
  double est_gap_sq = 0.0;
  double delta_y = 0.0;
  double delta_alpha = 0.0;
  double delta_h_or_v = 0.0;
  double elapsed_ms = 0.0;
};

struct RunOptions {
  long record_every = 10;
  /// Additional iterations to force a record at (e.g. a sampled report
  /// iterate).
  std::vector<long> extra_record_iters;
  /// Compute closed-form diagnostics when the problem supports them.
  bool diagnostics = true;
  /// Called after each recorded row.
  std::function<void(const TraceRecord&)> on_record;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  bool diverged = false;
  long completed_iters = 0;
};

/// Run `cfg.horizon` iterations from the given state. Records are taken at
/// iteration 0, every `record_every` iterations, at the final iteration and
/// at the requested extras; each record reports the pre-step iterate of that
/// iteration and the momentum direction right after the step.
RunResult run_v1(const Problem& p, StateV1& st, const RunConfig& cfg,
                 const RunOptions& opts);
RunResult run_v2(const Problem& p, StateV2& st, const RunConfig& cfg,
                 const RunOptions& opts);
/// Dispatch on `variant` from freshly initialized states.
RunResult run(const Problem& p, const RunConfig& cfg, Variant variant,
              const RunOptions& opts);

/// Write trace rows as CSV with a fixed header and 17 significant digits.
/// `zero_elapsed` writes 0 in the elapsed column so identical runs produce
/// byte-identical files.
void write_trace_csv(const std::string& path,
                     const std::vector<TraceRecord>& trace, bool zero_elapsed);
std::string trace_csv_string(const std::vector<TraceRecord>& trace,
                             bool zero_elapsed);

}  // namespace mmb
