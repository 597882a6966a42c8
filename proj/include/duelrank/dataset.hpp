#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace duelrank {

// Preference records for a single task. Row i of `features` holds the
// feature difference x_i = phi(s, a1) - phi(s, a2); labels[i] in {0,1}.
// record_ids are globally unique within a pipeline run so that phase
// disjointness can be asserted.
struct ComparisonDataset {
  int task_id = 0;  // 1-based; M+1 is the target task
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd labels;    // n, entries in {0,1}
  std::vector<int> context_ids;
  std::vector<std::pair<int, int>> action_pairs;
  std::vector<std::uint64_t> record_ids;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (labels.size() != features.rows())
      throw std::invalid_argument("dataset: label/feature row mismatch");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      const double y = labels[i];
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("dataset: label not in {0,1}");
    }
  }
};

}  // namespace duelrank
