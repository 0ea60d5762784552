#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmb/auc.hpp"
#include "mmb/dataset.hpp"
#include "mmb/optimizer.hpp"

namespace mmb {

/// Constants of the smoothed partial-AUC surrogate.
struct PaucConfig {
  double rho = 0.5;             // negative fraction kept
  double tau1 = 1e-3;           // sigmoid temperature in the top-K smoothing
  double tau2 = 1e-6;           // quadratic regularizer on lambda
  double epsilon_smooth = 0.01; // offset added to K in the lambda objective
  double margin = 1.0;          // the c offset in the dual term
  /// Drop the correction chains that account for lambda's dependence on the
  /// scores; cheaper, biased.
  bool practical_mode = false;
  void validate() const;
};

/// Number of negatives the surrogate keeps for a task with n_minus
/// negatives: floor(rho n_minus), at least 1.
int pauc_top_k(int n_minus, double rho);

/// Smoothed quantile objective in lambda for one task, its derivatives, and
/// an accurate solver. `neg_scores` stands in for the negative population
/// (full data or a batch); K and n_minus are task constants.
///   L(lambda) = (K + eps)/n_minus * lambda + tau2/2 * lambda^2
///               + mean_j tau1 log(1 + exp((h_j - lambda)/tau1))
double pauc_lambda_value(double lambda, const Eigen::VectorXd& neg_scores,
                         int K, int n_minus, const PaucConfig& cfg);
double pauc_lambda_grad(double lambda, const Eigen::VectorXd& neg_scores,
                        int K, int n_minus, const PaucConfig& cfg);
double pauc_lambda_hess(double lambda, const Eigen::VectorXd& neg_scores,
                        const PaucConfig& cfg);
/// Root of the (strictly increasing) gradient, by bisection.
double pauc_lambda_solve(const Eigen::VectorXd& neg_scores, int K, int n_minus,
                         const PaucConfig& cfg);

/// Quantities held fixed ("stop-gradient") inside the score surrogate,
/// captured at the current iterate.
struct PaucFrozen {
  Eigen::VectorXd phi;        // sigmoid(h_j - lambda) per batch negative
  Eigen::VectorXd phi_prime;  // phi (1 - phi)
  double h_inv = 0.0;         // 1 / H, the smoothed curvature inverse
  Eigen::VectorXd sq_frozen;  // (h_j - b)^2 at capture time
  Eigen::VectorXd h_frozen;   // h_j at capture time
};

PaucFrozen pauc_freeze(const Eigen::VectorXd& neg_scores, double lambda,
                       double b, double H, const PaucConfig& cfg);

/// Value of the gradient surrogate at parameters `p` with the frozen
/// quantities pinned; differentiating this in (p, a, b) yields exactly the
/// estimator below, which tests verify by finite differences.
double pauc_g_value(const TaskParams& p, double a, double b, double alpha,
                    const TaskDataset& d, const std::vector<int>& pos,
                    const std::vector<int>& neg, double lambda,
                    const PaucFrozen& fr, const PaucConfig& cfg);

struct PaucGGrads {
  double value = 0.0;
  TaskParams d_params;
  double d_a = 0.0;
  double d_b = 0.0;
  /// Ascent direction for the dual: 2 (batch margin) - 2 alpha, where the
  /// margin weighs negatives by the frozen phi.
  double d_alpha = 0.0;
};

PaucGGrads pauc_g_grad(const TaskParams& p, double a, double b, double alpha,
                       const TaskDataset& d, const std::vector<int>& pos,
                       const std::vector<int>& neg, double lambda,
                       const PaucFrozen& fr, const PaucConfig& cfg);

struct PaucState {
  Scorer w;
  Eigen::VectorXd a, b, alpha;   // per task; alpha stays nonnegative
  Eigen::VectorXd lambda, H;     // per-task quantile iterate and curvature
  Eigen::MatrixXd z_encoder;
  std::vector<Eigen::VectorXd> z_heads;
  Eigen::VectorXd z_a, z_b;
};

PaucState init_pauc(const std::vector<TaskDataset>& data,
                    const AucModelConfig& mc, const PaucConfig& pc,
                    std::uint64_t seed);

/// One iteration over a sampled task batch. Per task: dual ascent on alpha
/// (projected to be nonnegative), a gradient step on lambda, a momentum
/// update of the curvature H (both evaluated at the incoming lambda), then
/// the score surrogate gradient at the refreshed (lambda, H). Returns false
/// on non-finite values.
bool step_pauc(PaucState& st, const std::vector<TaskDataset>& data,
               const PaucConfig& pc, const RunConfig& cfg, long iter);

/// Full training loop; the recorded F column is the full-data surrogate and
/// the metric is the mean partial AUC at the configured rho.
AppRunResult run_pauc(const std::vector<TaskDataset>& data,
                      const AucModelConfig& mc, const PaucConfig& pc,
                      const RunConfig& cfg, const RunOptions& opts);

/// Mean partial AUC of the scorer across tasks on full data.
double mean_pauc(const Scorer& s, const std::vector<TaskDataset>& data,
                 double rho);

}  // namespace mmb
