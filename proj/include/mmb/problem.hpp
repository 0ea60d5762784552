#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "mmb/rng.hpp"

namespace mmb {

struct ProblemDims {
  int blocks = 1;   // m
  int d_x = 1;
  int d_y = 1;
  int d_alpha = 1;
  void validate() const;
};

/// Smoothness and noise constants attached to a problem instance.
/// mu_f: strong concavity of f_i in alpha.  mu_g: strong convexity of g_i
/// in y.  L_f, L_g: gradient Lipschitz constants.  C_f: bound on the dual
/// gradients of f_i.  C_gxy: bound on the cross second derivatives of g_i.
/// sigma: oracle noise scale (per-sample standard deviation).
struct SmoothnessProfile {
  double mu_f = 1.0;
  double mu_g = 1.0;
  double L_f = 2.0;
  double L_g = 2.0;
  double C_f = 50.0;
  double C_gxy = 10.0;
  double sigma = 0.0;
  void validate() const;
};

/// Constraint set for the dual variables, applied coordinatewise.
struct DualSet {
  enum class Kind { Reals, Nonneg, Box };
  Kind kind = Kind::Reals;
  double lo = 0.0;
  double hi = 0.0;

  static DualSet reals() { return DualSet{}; }
  static DualSet nonneg() { return DualSet{Kind::Nonneg, 0.0, 0.0}; }
  static DualSet box(double lo, double hi);

  Eigen::VectorXd project(const Eigen::VectorXd& a) const;
};

enum class OracleKind {
  grad_x_f,
  grad_alpha_f,
  grad_y_f,
  grad_y_g,
  hess_yy_g,
  jac_xy_g,
};

struct OracleQuery {
  int block = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd alpha;
  Eigen::VectorXd y;
  std::vector<int> batch;  // sample indices, nonempty
};

/// A multi-block min-max problem with a strongly convex lower level per
/// block, exposed through stochastic first/second order oracles.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual const ProblemDims& dims() const = 0;
  virtual const SmoothnessProfile& profile() const = 0;
  virtual const DualSet& dual_set() const = 0;
  /// Number of samples available for `block` (batch indices range over it).
  virtual int sample_count(int block) const = 0;

  /// Evaluate a stochastic oracle. Vector results come back as n-by-1.
  /// Throws std::invalid_argument on a malformed query.
  virtual Eigen::MatrixXd oracle(OracleKind kind, const OracleQuery& q,
                                 RngStream& rng) const = 0;
};

/// One block of the synthetic quadratic family:
///   g_i(x, y)        = (1/2) y'A y - y'(B x + c)
///   f_i(x, alpha, y) = alpha (p'x + q'y + r) - (mu_f/2) alpha^2
///                      + (1/2) x'M x + s'y
/// with A symmetric positive definite (eigenvalues in [mu_g, L_g]) and M
/// symmetric. alpha is scalar.
struct SyntheticBlock {
  Eigen::MatrixXd A;  // d_y x d_y
  Eigen::MatrixXd B;  // d_y x d_x
  Eigen::VectorXd c;  // d_y
  Eigen::VectorXd p;  // d_x
  Eigen::VectorXd q;  // d_y
  double r = 0.0;
  Eigen::MatrixXd M;  // d_x x d_x
  Eigen::VectorXd s;  // d_y
};

/// Synthetic quadratic instance with closed-form solutions at every level.
/// The stochastic oracles add centered Gaussian noise with per-coordinate
/// variance sigma^2 / |batch|; at sigma == 0 they return the exact values.
/// The Hessian oracle symmetrizes its sample and clamps eigenvalues from
/// below at mu_g, so returned Hessians are always safely invertible.
class SyntheticQuadraticProblem final : public Problem {
 public:
  SyntheticQuadraticProblem(ProblemDims dims, SmoothnessProfile profile,
                            std::vector<SyntheticBlock> blocks,
                            int nominal_samples = 1000000);

  const ProblemDims& dims() const override { return dims_; }
  const SmoothnessProfile& profile() const override { return profile_; }
  const DualSet& dual_set() const override { return dual_set_; }
  int sample_count(int block) const override;
  Eigen::MatrixXd oracle(OracleKind kind, const OracleQuery& q,
                         RngStream& rng) const override;

  const SyntheticBlock& block(int i) const;

  // Exact (noise-free) derivatives of one block.
  Eigen::VectorXd grad_x_f(int i, const Eigen::VectorXd& x, double alpha,
                           const Eigen::VectorXd& y) const;
  double grad_alpha_f(int i, const Eigen::VectorXd& x, double alpha,
                      const Eigen::VectorXd& y) const;
  Eigen::VectorXd grad_y_f(int i, double alpha) const;
  Eigen::VectorXd grad_y_g(int i, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y) const;
  const Eigen::MatrixXd& hess_yy_g(int i) const;
  Eigen::MatrixXd jac_xy_g(int i) const;  // d_x x d_y

  double f_value(int i, const Eigen::VectorXd& x, double alpha,
                 const Eigen::VectorXd& y) const;
  double g_value(int i, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& y) const;

  /// Lower-level solution y_i(x) = A^{-1}(B x + c).
  Eigen::VectorXd lower_solution(int i, const Eigen::VectorXd& x) const;
  /// Inner maximizer alpha_i(x) of f_i(x, ., y_i(x)) over the dual set.
  double dual_solution(int i, const Eigen::VectorXd& x) const;
  /// Hyper-objective F(x) = (1/m) sum_i f_i(x, alpha_i(x), y_i(x)).
  double objective(const Eigen::VectorXd& x) const;

  void save(const std::string& path) const;
  static SyntheticQuadraticProblem load(const std::string& path);

 private:
  ProblemDims dims_;
  SmoothnessProfile profile_;
  DualSet dual_set_;
  std::vector<SyntheticBlock> blocks_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;  // factorization of each A
  int nominal_samples_;
};

/// Draw a random instance. Block data are sampled from standard normals,
/// each A via a random orthogonal basis with eigenvalues uniform in
/// [mu_g, L_g]. The quadratic terms M_i are then shifted by a common
/// multiple of the identity so the averaged objective curvature stays at or
/// above `curvature_floor`, keeping F bounded below; individual blocks
/// typically remain indefinite in x.
SyntheticQuadraticProblem synth_generate(std::uint64_t seed,
                                         const ProblemDims& dims,
                                         const SmoothnessProfile& profile,
                                         double curvature_floor = 0.1);

}  // namespace mmb
