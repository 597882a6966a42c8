#pragma once

#include <Eigen/Dense>

#include "duelrank/rng.hpp"

namespace duelrank::detail {

inline Eigen::VectorXd gaussian_vector(Rng& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

// Thin QR orthonormalization with a fixed sign convention: the entry of
// largest magnitude in each column is made positive.
inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& A) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  for (int j = 0; j < q.cols(); ++j) {
    int pivot = 0;
    q.col(j).cwiseAbs().maxCoeff(&pivot);
    if (q(pivot, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

inline Eigen::MatrixXd random_orthonormal(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd g(rows, cols);
  for (int j = 0; j < cols; ++j) g.col(j) = gaussian_vector(rng, rows);
  return orthonormalize(g);
}

}  // namespace duelrank::detail
