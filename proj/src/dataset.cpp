#include "mmb/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mmb {

int TaskDataset::positives() const {
  int n = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] > 0) ++n;
  return n;
}

int TaskDataset::negatives() const {
  return static_cast<int>(labels.size()) - positives();
}

void TaskDataset::validate() const {
  if (features.rows() != labels.size())
    throw std::invalid_argument("dataset: row/label count mismatch");
  if (features.rows() == 0) throw std::invalid_argument("dataset: empty");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] != 1 && labels[i] != -1)
      throw std::invalid_argument("dataset: labels must be +1 or -1");
}

namespace {

std::vector<std::vector<double>> parse_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof())
      throw std::runtime_error(path + ": malformed value on line " +
                               std::to_string(rows.size() + 1));
    if (row.empty()) continue;
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::runtime_error(path + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  return rows;
}

int parse_label(double v, const std::string& path) {
  if (v == 1.0) return 1;
  if (v == -1.0) return -1;
  throw std::runtime_error(path + ": labels must be +1 or -1");
}

TaskDataset from_rows(const std::vector<std::vector<double>>& rows,
                      std::size_t first_col, const std::string& path) {
  if (rows.at(0).size() < first_col + 2)
    throw std::runtime_error(path + ": need a label and at least one feature");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows[0].size() - first_col - 1);
  TaskDataset ds;
  ds.features.resize(n, d);
  ds.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    ds.labels[i] = parse_label(row[first_col], path);
    for (Eigen::Index j = 0; j < d; ++j)
      ds.features(i, j) = row[first_col + 1 + static_cast<std::size_t>(j)];
  }
  ds.validate();
  return ds;
}

}  // namespace

TaskDataset load_task_file(const std::string& path) {
  return from_rows(parse_rows(path), 0, path);
}

std::vector<TaskDataset> load_task_files(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("load_task_files: no paths");
  std::vector<TaskDataset> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_task_file(p));
  return out;
}

std::vector<TaskDataset> load_single_file(const std::string& path) {
  const auto rows = parse_rows(path);
  std::map<int, std::vector<std::vector<double>>> by_task;
  for (const auto& row : rows) {
    const double t = row.at(0);
    const int ti = static_cast<int>(t);
    if (t != ti || ti < 0)
      throw std::runtime_error(path + ": task ids must be nonnegative integers");
    by_task[ti].push_back(row);
  }
  std::vector<TaskDataset> out;
  int expect = 0;
  for (const auto& [id, task_rows] : by_task) {
    if (id != expect++)
      throw std::runtime_error(path + ": task ids must be contiguous from 0");
    out.push_back(from_rows(task_rows, 1, path));
  }
  return out;
}

void save_task_file(const TaskDataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < d.labels.size(); ++i) {
    out << d.labels[i];
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), " %.17g", d.features(i, j));
      out << buf;
    }
    out << "\n";
  }
}

std::vector<TaskDataset> make_separable_tasks(std::uint64_t seed, int tasks,
                                              int n, int dim, double pos_frac,
                                              double margin) {
  if (tasks <= 0 || n < 2 || dim <= 0)
    throw std::invalid_argument("make_separable_tasks: bad sizes");
  if (pos_frac <= 0.0 || pos_frac >= 1.0)
    throw std::invalid_argument("make_separable_tasks: pos_frac must be in (0,1)");
  if (margin <= 0.0)
    throw std::invalid_argument("make_separable_tasks: margin must be positive");
  RngStream root(seed);
  std::vector<TaskDataset> out;
  out.reserve(static_cast<std::size_t>(tasks));
  for (int t = 0; t < tasks; ++t) {
    RngStream r = root.fork(static_cast<std::uint64_t>(t));
    Eigen::VectorXd w(dim);
    for (int j = 0; j < dim; ++j) w[j] = r.gaussian();
    w.normalize();
    int n_pos = std::clamp(static_cast<int>(std::lround(pos_frac * n)), 1, n - 1);
    TaskDataset ds;
    ds.features.resize(n, dim);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      const int label = i < n_pos ? 1 : -1;
      const double along = margin + std::abs(0.25 * r.gaussian());
      Eigen::VectorXd jitter(dim);
      for (int j = 0; j < dim; ++j) jitter[j] = 0.3 * r.gaussian();
      jitter -= w.dot(jitter) * w;  // keep the signed margin intact
      ds.features.row(i) = (label * along * w + jitter).transpose();
      ds.labels[i] = label;
    }
    ds.validate();
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace mmb
