#pragma once

#include <Eigen/Dense>

#include "mmb/optimizer.hpp"
#include "mmb/problem.hpp"

namespace mmb {

/// Exact gradient of the hyper-objective of a synthetic instance,
///   grad F(x) = (1/m) sum_i [ a_i p_i + M_i x + B_i' A_i^{-1} (a_i q_i + s_i) ]
/// with a_i, y_i at their closed-form solutions. With
/// `include_dual_chain` the term (d f_i / d alpha) * (d alpha_i / d x) is
/// added; at the inner maximizer it vanishes, which the tests use to check
/// the envelope property.
Eigen::VectorXd exact_grad_F(const SyntheticQuadraticProblem& p,
                             const Eigen::VectorXd& x,
                             bool include_dual_chain = false);

/// Central finite differences on the closed-form objective.
Eigen::VectorXd fd_grad_F(const SyntheticQuadraticProblem& p,
                          const Eigen::VectorXd& x, double h = 1e-5);

/// Exact Hessian of the hyper-objective (constant in x):
///   (1/m) sum_i [ w_i w_i' / mu_f + M_i ],  w_i = p_i + B_i' A_i^{-1} q_i.
Eigen::MatrixXd exact_hess_F(const SyntheticQuadraticProblem& p);

struct GradCheckReport {
  Eigen::VectorXd grad_exact;
  Eigen::VectorXd grad_fd;
  double rel_error = 0.0;       // |exact - fd| / max(1, |exact|)
  double stationarity = 0.0;    // |exact|^2
};

GradCheckReport check_gradient(const SyntheticQuadraticProblem& p,
                               const Eigen::VectorXd& x, double h = 1e-5);

/// Squared distances of the current iterates to their closed-form targets
/// at the current x: sum_i |y_i - y_i(x)|^2, sum_i |alpha_i - alpha_i(x)|^2,
/// and for the estimator state either sum_i |s_i - A_i|^2 (Frobenius, with a
/// spectral variant alongside) or sum_i |v_i - A_i^{-1} grad_y f_i(x*)|^2.
struct DeltaErrors {
  double delta_y = 0.0;
  double delta_alpha = 0.0;
  double delta_h_or_v = 0.0;
  double delta_h_spectral = 0.0;  // only meaningful for the first variant
};

DeltaErrors delta_errors_v1(const SyntheticQuadraticProblem& p, const StateV1& st);
DeltaErrors delta_errors_v2(const SyntheticQuadraticProblem& p, const StateV2& st);

}  // namespace mmb
