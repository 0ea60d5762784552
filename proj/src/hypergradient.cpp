#include "mmb/hypergradient.hpp"

namespace mmb {

Eigen::VectorXd exact_grad_F(const SyntheticQuadraticProblem& p,
                             const Eigen::VectorXd& x, bool include_dual_chain) {
  const auto& d = p.dims();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d.d_x);
  for (int i = 0; i < d.blocks; ++i) {
    const auto& b = p.block(i);
    const Eigen::VectorXd y = p.lower_solution(i, x);
    const double a = p.dual_solution(i, x);
    // total derivative through y_i(x): dy/dx = A^{-1} B
    const Eigen::VectorXd gy = p.grad_y_f(i, a);  // a q + s
    Eigen::VectorXd gi = a * b.p + b.M * x + b.B.transpose() * b.A.llt().solve(gy);
    if (include_dual_chain) {
      // d alpha_i / dx = (p + B' A^{-1} q) / mu_f for the unconstrained dual
      const Eigen::VectorXd da =
          (b.p + b.B.transpose() * b.A.llt().solve(b.q)) / p.profile().mu_f;
      gi += p.grad_alpha_f(i, x, a, y) * da;
    }
    g += gi;
  }
  return g / d.blocks;
}

Eigen::VectorXd fd_grad_F(const SyntheticQuadraticProblem& p,
                          const Eigen::VectorXd& x, double h) {
  const int n = p.dims().d_x;
  Eigen::VectorXd g(n);
  Eigen::VectorXd e = x;
  for (int j = 0; j < n; ++j) {
    const double xj = x[j];
    e[j] = xj + h;
    const double fp = p.objective(e);
    e[j] = xj - h;
    const double fm = p.objective(e);
    e[j] = xj;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd exact_hess_F(const SyntheticQuadraticProblem& p) {
  const auto& d = p.dims();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d.d_x, d.d_x);
  for (int i = 0; i < d.blocks; ++i) {
    const auto& b = p.block(i);
    const Eigen::VectorXd w = b.p + b.B.transpose() * b.A.llt().solve(b.q);
    h += w * w.transpose() / p.profile().mu_f + b.M;
  }
  return h / d.blocks;
}

GradCheckReport check_gradient(const SyntheticQuadraticProblem& p,
                               const Eigen::VectorXd& x, double h) {
  GradCheckReport r;
  r.grad_exact = exact_grad_F(p, x);
  r.grad_fd = fd_grad_F(p, x, h);
  const double denom = std::max(1.0, r.grad_exact.norm());
  r.rel_error = (r.grad_exact - r.grad_fd).norm() / denom;
  r.stationarity = r.grad_exact.squaredNorm();
  return r;
}

DeltaErrors delta_errors_v1(const SyntheticQuadraticProblem& p, const StateV1& st) {
  DeltaErrors e;
  const int m = p.dims().blocks;
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd y_star = p.lower_solution(i, st.x);
    const double a_star = p.dual_solution(i, st.x);
    e.delta_y += (st.y[static_cast<std::size_t>(i)] - y_star).squaredNorm();
    Eigen::VectorXd as(1);
    as[0] = a_star;
    e.delta_alpha += (st.alpha[static_cast<std::size_t>(i)] - as).squaredNorm();
    const Eigen::MatrixXd diff = st.s[static_cast<std::size_t>(i)] - p.hess_yy_g(i);
    e.delta_h_or_v += diff.squaredNorm();
    e.delta_h_spectral += diff.operatorNorm() * diff.operatorNorm();
  }
  return e;
}

DeltaErrors delta_errors_v2(const SyntheticQuadraticProblem& p, const StateV2& st) {
  DeltaErrors e;
  const int m = p.dims().blocks;
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd y_star = p.lower_solution(i, st.x);
    const double a_star = p.dual_solution(i, st.x);
    e.delta_y += (st.y[static_cast<std::size_t>(i)] - y_star).squaredNorm();
    Eigen::VectorXd as(1);
    as[0] = a_star;
    e.delta_alpha += (st.alpha[static_cast<std::size_t>(i)] - as).squaredNorm();
    // target v_i(x) = A_i^{-1} grad_y f_i at the solved inner variables
    const Eigen::VectorXd target =
        p.block(i).A.llt().solve(p.grad_y_f(i, a_star));
    e.delta_h_or_v += (st.v[static_cast<std::size_t>(i)] - target).squaredNorm();
  }
  return e;
}

}  // namespace mmb
