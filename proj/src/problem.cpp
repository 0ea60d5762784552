#include "mmb/problem.hpp"

#include <Eigen/Eigenvalues>
#include <fstream>
#include <json.hpp>

namespace mmb {

void ProblemDims::validate() const {
  if (blocks <= 0) throw std::invalid_argument("dims: blocks must be positive");
  if (d_x <= 0) throw std::invalid_argument("dims: d_x must be positive");
  if (d_y <= 0) throw std::invalid_argument("dims: d_y must be positive");
  if (d_alpha <= 0) throw std::invalid_argument("dims: d_alpha must be positive");
}

void SmoothnessProfile::validate() const {
  if (mu_f <= 0.0) throw std::invalid_argument("profile: mu_f must be positive");
  if (mu_g <= 0.0) throw std::invalid_argument("profile: mu_g must be positive");
  if (L_f < mu_f) throw std::invalid_argument("profile: L_f must be >= mu_f");
  if (L_g < mu_g) throw std::invalid_argument("profile: L_g must be >= mu_g");
  if (C_f <= 0.0) throw std::invalid_argument("profile: C_f must be positive");
  if (C_gxy <= 0.0) throw std::invalid_argument("profile: C_gxy must be positive");
  if (sigma < 0.0) throw std::invalid_argument("profile: sigma must be >= 0");
}

DualSet DualSet::box(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("DualSet::box: need lo <= hi");
  return DualSet{Kind::Box, lo, hi};
}

Eigen::VectorXd DualSet::project(const Eigen::VectorXd& a) const {
  switch (kind) {
    case Kind::Reals:
      return a;
    case Kind::Nonneg:
      return a.cwiseMax(0.0);
    case Kind::Box:
      return a.cwiseMax(lo).cwiseMin(hi);
  }
  throw std::logic_error("DualSet::project: bad kind");
}

SyntheticQuadraticProblem::SyntheticQuadraticProblem(
    ProblemDims dims, SmoothnessProfile profile,
    std::vector<SyntheticBlock> blocks, int nominal_samples)
    : dims_(dims),
      profile_(profile),
      dual_set_(DualSet::reals()),
      blocks_(std::move(blocks)),
      nominal_samples_(nominal_samples) {
  dims_.validate();
  profile_.validate();
  if (dims_.d_alpha != 1)
    throw std::invalid_argument("synthetic problem: d_alpha must be 1");
  if (static_cast<int>(blocks_.size()) != dims_.blocks)
    throw std::invalid_argument("synthetic problem: block count mismatch");
  if (nominal_samples_ <= 0)
    throw std::invalid_argument("synthetic problem: nominal_samples must be positive");
  llt_.reserve(blocks_.size());
  for (int i = 0; i < dims_.blocks; ++i) {
    const auto& b = blocks_[static_cast<std::size_t>(i)];
    if (b.A.rows() != dims_.d_y || b.A.cols() != dims_.d_y ||
        b.B.rows() != dims_.d_y || b.B.cols() != dims_.d_x ||
        b.c.size() != dims_.d_y || b.p.size() != dims_.d_x ||
        b.q.size() != dims_.d_y || b.M.rows() != dims_.d_x ||
        b.M.cols() != dims_.d_x || b.s.size() != dims_.d_y)
      throw std::invalid_argument("synthetic problem: block shape mismatch");
    llt_.emplace_back(b.A);
    if (llt_.back().info() != Eigen::Success)
      throw std::invalid_argument("synthetic problem: A must be positive definite");
  }
}

int SyntheticQuadraticProblem::sample_count(int block) const {
  if (block < 0 || block >= dims_.blocks)
    throw std::invalid_argument("sample_count: block out of range");
  return nominal_samples_;
}

const SyntheticBlock& SyntheticQuadraticProblem::block(int i) const {
  if (i < 0 || i >= dims_.blocks)
    throw std::invalid_argument("block index out of range");
  return blocks_[static_cast<std::size_t>(i)];
}

Eigen::VectorXd SyntheticQuadraticProblem::grad_x_f(int i, const Eigen::VectorXd& x,
                                                    double alpha,
                                                    const Eigen::VectorXd& y) const {
  (void)y;
  const auto& b = block(i);
  return alpha * b.p + b.M * x;
}

double SyntheticQuadraticProblem::grad_alpha_f(int i, const Eigen::VectorXd& x,
                                               double alpha,
                                               const Eigen::VectorXd& y) const {
  const auto& b = block(i);
  return b.p.dot(x) + b.q.dot(y) + b.r - profile_.mu_f * alpha;
}

Eigen::VectorXd SyntheticQuadraticProblem::grad_y_f(int i, double alpha) const {
  const auto& b = block(i);
  return alpha * b.q + b.s;
}

Eigen::VectorXd SyntheticQuadraticProblem::grad_y_g(int i, const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& y) const {
  const auto& b = block(i);
  return b.A * y - (b.B * x + b.c);
}

const Eigen::MatrixXd& SyntheticQuadraticProblem::hess_yy_g(int i) const {
  return block(i).A;
}

Eigen::MatrixXd SyntheticQuadraticProblem::jac_xy_g(int i) const {
  return -block(i).B.transpose();
}

double SyntheticQuadraticProblem::f_value(int i, const Eigen::VectorXd& x,
                                          double alpha,
                                          const Eigen::VectorXd& y) const {
  const auto& b = block(i);
  const double lin = b.p.dot(x) + b.q.dot(y) + b.r;
  return alpha * lin - 0.5 * profile_.mu_f * alpha * alpha +
         0.5 * x.dot(b.M * x) + b.s.dot(y);
}

double SyntheticQuadraticProblem::g_value(int i, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y) const {
  const auto& b = block(i);
  return 0.5 * y.dot(b.A * y) - y.dot(b.B * x + b.c);
}

Eigen::VectorXd SyntheticQuadraticProblem::lower_solution(int i,
                                                          const Eigen::VectorXd& x) const {
  const auto& b = block(i);
  return llt_[static_cast<std::size_t>(i)].solve(b.B * x + b.c);
}

double SyntheticQuadraticProblem::dual_solution(int i, const Eigen::VectorXd& x) const {
  const auto& b = block(i);
  const Eigen::VectorXd y = lower_solution(i, x);
  const double u = (b.p.dot(x) + b.q.dot(y) + b.r) / profile_.mu_f;
  Eigen::VectorXd a(1);
  a[0] = u;
  return dual_set_.project(a)[0];
}

double SyntheticQuadraticProblem::objective(const Eigen::VectorXd& x) const {
  double total = 0.0;
  for (int i = 0; i < dims_.blocks; ++i) {
    const Eigen::VectorXd y = lower_solution(i, x);
    const double a = dual_solution(i, x);
    total += f_value(i, x, a, y);
  }
  return total / dims_.blocks;
}

namespace {

void check_query(const SyntheticQuadraticProblem& p, const OracleQuery& q) {
  const auto& d = p.dims();
  if (q.block < 0 || q.block >= d.blocks)
    throw std::invalid_argument("oracle: block out of range");
  if (q.x.size() != d.d_x) throw std::invalid_argument("oracle: bad x size");
  if (q.alpha.size() != d.d_alpha)
    throw std::invalid_argument("oracle: bad alpha size");
  if (q.y.size() != d.d_y) throw std::invalid_argument("oracle: bad y size");
  if (q.batch.empty()) throw std::invalid_argument("oracle: empty batch");
  const int n = p.sample_count(q.block);
  for (int idx : q.batch)
    if (idx < 0 || idx >= n)
      throw std::invalid_argument("oracle: batch index out of range");
}

void add_noise(Eigen::MatrixXd& m, double scale, RngStream& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) += scale * rng.gaussian();
}

}  // namespace

Eigen::MatrixXd SyntheticQuadraticProblem::oracle(OracleKind kind,
                                                  const OracleQuery& q,
                                                  RngStream& rng) const {
  check_query(*this, q);
  const double alpha = q.alpha[0];
  Eigen::MatrixXd exact;
  switch (kind) {
    case OracleKind::grad_x_f:
      exact = grad_x_f(q.block, q.x, alpha, q.y);
      break;
    case OracleKind::grad_alpha_f: {
      exact.resize(1, 1);
      exact(0, 0) = grad_alpha_f(q.block, q.x, alpha, q.y);
      break;
    }
    case OracleKind::grad_y_f:
      exact = grad_y_f(q.block, alpha);
      break;
    case OracleKind::grad_y_g:
      exact = grad_y_g(q.block, q.x, q.y);
      break;
    case OracleKind::hess_yy_g:
      exact = hess_yy_g(q.block);
      break;
    case OracleKind::jac_xy_g:
      exact = jac_xy_g(q.block);
      break;
    default:
      throw std::invalid_argument("oracle: unknown kind");
  }
  if (profile_.sigma == 0.0) return exact;

  const double scale =
      profile_.sigma / std::sqrt(static_cast<double>(q.batch.size()));
  add_noise(exact, scale, rng);
  if (kind == OracleKind::hess_yy_g) {
    // keep the sample symmetric and its spectrum at or above mu_g, so the
    // momentum average stays invertible with a bounded inverse
    Eigen::MatrixXd sym = 0.5 * (exact + exact.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(profile_.mu_g);
    exact = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  return exact;
}

void SyntheticQuadraticProblem::save(const std::string& path) const {
  using nlohmann::json;
  auto mat = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  json j;
  j["dims"] = {{"blocks", dims_.blocks},
               {"d_x", dims_.d_x},
               {"d_y", dims_.d_y},
               {"d_alpha", dims_.d_alpha}};
  j["profile"] = {{"mu_f", profile_.mu_f}, {"mu_g", profile_.mu_g},
                  {"L_f", profile_.L_f},   {"L_g", profile_.L_g},
                  {"C_f", profile_.C_f},   {"C_gxy", profile_.C_gxy},
                  {"sigma", profile_.sigma}};
  j["nominal_samples"] = nominal_samples_;
  json blocks = json::array();
  for (const auto& b : blocks_) {
    json jb;
    jb["A"] = mat(b.A);
    jb["B"] = mat(b.B);
    jb["c"] = vec(b.c);
    jb["p"] = vec(b.p);
    jb["q"] = vec(b.q);
    jb["r"] = b.r;
    jb["M"] = mat(b.M);
    jb["s"] = vec(b.s);
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

SyntheticQuadraticProblem SyntheticQuadraticProblem::load(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j = json::parse(in);
  auto mat = [](const json& rows) {
    const auto nr = rows.size();
    const auto nc = nr ? rows.at(0).size() : 0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            rows.at(r).at(c).get<double>();
    return m;
  };
  auto vec = [](const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      v[static_cast<Eigen::Index>(i)] = a.at(i).get<double>();
    return v;
  };
  ProblemDims dims;
  dims.blocks = j.at("dims").at("blocks").get<int>();
  dims.d_x = j.at("dims").at("d_x").get<int>();
  dims.d_y = j.at("dims").at("d_y").get<int>();
  dims.d_alpha = j.at("dims").at("d_alpha").get<int>();
  SmoothnessProfile prof;
  prof.mu_f = j.at("profile").at("mu_f").get<double>();
  prof.mu_g = j.at("profile").at("mu_g").get<double>();
  prof.L_f = j.at("profile").at("L_f").get<double>();
  prof.L_g = j.at("profile").at("L_g").get<double>();
  prof.C_f = j.at("profile").at("C_f").get<double>();
  prof.C_gxy = j.at("profile").at("C_gxy").get<double>();
  prof.sigma = j.at("profile").at("sigma").get<double>();
  std::vector<SyntheticBlock> blocks;
  for (const auto& jb : j.at("blocks")) {
    SyntheticBlock b;
    b.A = mat(jb.at("A"));
    b.B = mat(jb.at("B"));
    b.c = vec(jb.at("c"));
    b.p = vec(jb.at("p"));
    b.q = vec(jb.at("q"));
    b.r = jb.at("r").get<double>();
    b.M = mat(jb.at("M"));
    b.s = vec(jb.at("s"));
    blocks.push_back(std::move(b));
  }
  return SyntheticQuadraticProblem(dims, prof, std::move(blocks),
                                   j.at("nominal_samples").get<int>());
}

SyntheticQuadraticProblem synth_generate(std::uint64_t seed,
                                         const ProblemDims& dims,
                                         const SmoothnessProfile& profile,
                                         double curvature_floor) {
  dims.validate();
  profile.validate();
  if (dims.d_alpha != 1)
    throw std::invalid_argument("synth_generate: d_alpha must be 1");
  RngStream root(seed);
  auto gauss_mat = [](RngStream& r, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = r.gaussian();
    return m;
  };
  auto gauss_vec = [](RngStream& r, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = r.gaussian();
    return v;
  };

  std::vector<SyntheticBlock> blocks;
  blocks.reserve(static_cast<std::size_t>(dims.blocks));
  for (int i = 0; i < dims.blocks; ++i) {
    RngStream r = root.at({stream_label::init, static_cast<std::uint64_t>(i)});
    SyntheticBlock b;
    // A = Q diag(lambda) Q' with lambda uniform in [mu_g, L_g]
    Eigen::MatrixXd raw = gauss_mat(r, dims.d_y, dims.d_y);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::VectorXd rd = qr.matrixQR().diagonal();
    for (int k = 0; k < dims.d_y; ++k)
      if (rd[k] < 0.0) Q.col(k) = -Q.col(k);
    Eigen::VectorXd lam(dims.d_y);
    for (int k = 0; k < dims.d_y; ++k)
      lam[k] = profile.mu_g + (profile.L_g - profile.mu_g) * r.uniform();
    b.A = Q * lam.asDiagonal() * Q.transpose();
    b.A = 0.5 * (b.A + b.A.transpose());
    b.B = gauss_mat(r, dims.d_y, dims.d_x);
    b.c = gauss_vec(r, dims.d_y);
    b.p = gauss_vec(r, dims.d_x);
    b.q = gauss_vec(r, dims.d_y);
    b.r = r.gaussian();
    Eigen::MatrixXd rawM = gauss_mat(r, dims.d_x, dims.d_x);
    b.M = 0.5 * (rawM + rawM.transpose());
    b.s = gauss_vec(r, dims.d_y);
    blocks.push_back(std::move(b));
  }

  // Curvature of the averaged objective in x:
  //   (1/m) sum_i [ w_i w_i' / mu_f + M_i ],  w_i = p_i + B_i' A_i^{-1} q_i.
  // Shift every M_i equally so its smallest eigenvalue reaches the floor.
  Eigen::MatrixXd curv = Eigen::MatrixXd::Zero(dims.d_x, dims.d_x);
  for (const auto& b : blocks) {
    Eigen::VectorXd w = b.p + b.B.transpose() * b.A.llt().solve(b.q);
    curv += w * w.transpose() / profile.mu_f + b.M;
  }
  curv /= dims.blocks;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(curv);
  const double lam_min = es.eigenvalues().minCoeff();
  if (lam_min < curvature_floor) {
    const double shift = curvature_floor - lam_min;
    for (auto& b : blocks)
      b.M += shift * Eigen::MatrixXd::Identity(dims.d_x, dims.d_x);
  }
  return SyntheticQuadraticProblem(dims, profile, std::move(blocks));
}

}  // namespace mmb
