#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mmb/rng.hpp"

namespace mmb {

/// One task's labeled data. Rows of `features` are samples; labels are +1
/// or -1.
struct TaskDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
  int positives() const;
  int negatives() const;
  void validate() const;
};

/// Parse one file holding rows "label f1 f2 ... fd" (whitespace or comma
/// separated, label +1/-1, '#' comments and blank lines skipped).
TaskDataset load_task_file(const std::string& path);

/// One dataset per file.
std::vector<TaskDataset> load_task_files(const std::vector<std::string>& paths);

/// Single file with a leading integer task column: "task label f1 ... fd".
/// Tasks are returned in increasing id order; ids must be 0..k-1.
std::vector<TaskDataset> load_single_file(const std::string& path);

void save_task_file(const TaskDataset& d, const std::string& path);

/// Draw linearly separable tasks: each task gets a random unit direction w,
/// positives at margin + |noise| along w, negatives at -(margin + |noise|),
/// plus spherical jitter orthogonal to w. `pos_frac` of the n samples are
/// positive (at least one of each class).
std::vector<TaskDataset> make_separable_tasks(std::uint64_t seed, int tasks,
                                              int n, int dim, double pos_frac,
                                              double margin = 1.0);

}  // namespace mmb
