#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace styloscope {

/// Principal directions of a centered sample, rows ordered by descending
/// explained variance. Each component's largest-magnitude entry is positive.
struct PcaModel {
  Eigen::VectorXd mean;                // d
  Eigen::MatrixXd components;          // k x d, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, non-increasing
  double total_variance = 0.0;         // trace of the sample covariance

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(components.cols()); }

  Eigen::MatrixXd project(const Eigen::MatrixXd& rows) const;          // n x k
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected) const;  // n x d
  Eigen::VectorXd explained_variance_ratio() const;

  /// Components [first, first + count) as a model of its own (0-based first).
  PcaModel subspace(std::size_t first, std::size_t count) const;
};

/// Requires count >= 2 and 1 <= k <= min(count - 1, d).
PcaModel fit_pca(const Eigen::MatrixXd& rows, std::size_t k);

/// All min(count - 1, d) components.
PcaModel fit_pca_full(const Eigen::MatrixXd& rows);

}  // namespace styloscope
