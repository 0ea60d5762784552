#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmb/dataset.hpp"
#include "mmb/optimizer.hpp"
#include "mmb/rng.hpp"

namespace mmb {

/// Two-layer scorer shared across tasks: h(x) = head_k' tanh(W x) with a
/// shared encoder W and one linear head per task.
struct Scorer {
  Eigen::MatrixXd encoder;             // e x d
  std::vector<Eigen::VectorXd> heads;  // per task, size e
};

/// The parameters one task's score depends on: the shared encoder plus that
/// task's head. Also used for the per-task inner tracking variables.
struct TaskParams {
  Eigen::MatrixXd encoder;
  Eigen::VectorXd head;

  TaskParams& operator+=(const TaskParams& o);
  TaskParams& operator-=(const TaskParams& o);
  TaskParams& operator*=(double c);
  double squared_norm() const;
};

TaskParams task_params(const Scorer& s, int task);

double score(const TaskParams& p, const Eigen::VectorXd& x);
Eigen::VectorXd score_batch(const TaskParams& p, const TaskDataset& d,
                            const std::vector<int>& batch);
Eigen::VectorXd score_all(const TaskParams& p, const TaskDataset& d);

/// acc += weight * d score(p, x_idx) / d p.
void accumulate_score_grad(TaskParams& acc, const TaskParams& p,
                           const TaskDataset& d, int idx, double weight);

/// Area under the ROC curve; tied pairs count one half. Labels are +1/-1;
/// both classes must be present.
double metric_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels);
/// Partial variant restricted to the top floor(rho n_minus) negatives by
/// score (ties broken by original index); normalized by n_plus * K so a
/// perfect ranking scores 1. rho = 1 recovers metric_auc.
double metric_pauc(const std::vector<double>& scores,
                   const std::vector<int>& labels, double rho);

/// Square-loss min-max surrogate on a batch:
///   mean_pos (h-a)^2 + mean_neg (h-b)^2
///   + 2 alpha (c + mean_neg h - mean_pos h) - alpha^2.
/// The batch must contain both classes.
struct AucLossGrads {
  double loss = 0.0;
  TaskParams d_params;
  double d_a = 0.0;
  double d_b = 0.0;
  double d_alpha = 0.0;
};
AucLossGrads auc_minmax_loss(const TaskParams& p, double a, double b,
                             double alpha, double margin, const TaskDataset& d,
                             const std::vector<int>& batch);

/// Mean logistic loss and gradient on a batch.
struct CeGrad {
  double loss = 0.0;
  TaskParams grad;
};
CeGrad ce_loss_grad(const TaskParams& p, const TaskDataset& d,
                    const std::vector<int>& batch);

/// Exact Hessian-vector product of the mean logistic loss at `p` in
/// direction `dir`, by forward differentiation through the scorer.
TaskParams ce_hvp(const TaskParams& p, const TaskParams& dir,
                  const TaskDataset& d, const std::vector<int>& batch);

/// Tracking step for the compositional scheme:
///   u' = u - eta2 ( u - (w - eta_tilde * grad L_ce(w; batch)) ).
TaskParams compositional_lower_step(const TaskParams& u, const TaskParams& w,
                                    const TaskDataset& d,
                                    const std::vector<int>& batch, double eta2,
                                    double eta_tilde);

/// Model and smoothing constants for the ranking applications.
struct AucModelConfig {
  int encoder_dim = 8;
  double margin = 1.0;       // the c offset in the surrogate
  double eta_tilde = 0.5;    // inner step the tracking variables chase
  bool exact_ce_hvp = false; // correct the upper gradient by (I - eta_tilde H)
  double init_scale = 0.1;   // scale of the random parameter initialization
  void validate() const;
};

struct AucCtState {
  Scorer w;
  std::vector<TaskParams> u;  // per-task tracking variables
  Eigen::VectorXd a, b, alpha;
  // momentum average, one slot per primal component
  Eigen::MatrixXd z_encoder;
  std::vector<Eigen::VectorXd> z_heads;
  Eigen::VectorXd z_a, z_b;
};

AucCtState init_auc_ct(const std::vector<TaskDataset>& data,
                       const AucModelConfig& mc, std::uint64_t seed);
/// One iteration over a sampled task batch; returns false on non-finite
/// values.
bool step_auc_ct(AucCtState& st, const std::vector<TaskDataset>& data,
                 const AucModelConfig& mc, const RunConfig& cfg, long iter);

struct AppRunResult {
  std::vector<TraceRecord> trace;
  bool diverged = false;
  long completed_iters = 0;
  double final_metric = 0.0;
  double best_metric = 0.0;
};

/// Full training loop; the recorded F column is the surrogate loss over the
/// whole dataset and the metric is the mean AUC across tasks.
AppRunResult run_auc_ct(const std::vector<TaskDataset>& data,
                        const AucModelConfig& mc, const RunConfig& cfg,
                        const RunOptions& opts);

/// Mean AUC of the scorer across tasks on full data.
double mean_auc(const Scorer& s, const std::vector<TaskDataset>& data);

/// Batch with both classes present, drawn with replacement; retries with
/// relabeled substreams and throws after 100 single-class draws.
std::vector<int> two_class_batch(const TaskDataset& d, const RngStream& base,
                                 int batch_size);

}  // namespace mmb
