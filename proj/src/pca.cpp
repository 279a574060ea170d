#include "styloscope/pca.hpp"

#include <algorithm>
#include <string>

#include <Eigen/SVD>

#include "styloscope/errors.hpp"

namespace styloscope {

Eigen::MatrixXd PcaModel::project(const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != dim()) {
    fail(ErrorCode::IncompatibleEnsembles, "PCA input has " + std::to_string(rows.cols()) +
                                               " columns, model expects " + std::to_string(dim()));
  }
  return (rows.rowwise() - mean.transpose()) * components.transpose();
}

Eigen::MatrixXd PcaModel::reconstruct(const Eigen::MatrixXd& projected) const {
  return (projected * components).rowwise() + mean.transpose();
}

Eigen::VectorXd PcaModel::explained_variance_ratio() const {
  return explained_variance / total_variance;
}

PcaModel PcaModel::subspace(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > k()) {
    fail(ErrorCode::InvalidRange, "components [" + std::to_string(first + 1) + ", " +
                                      std::to_string(first + count) + "] exceed the " +
                                      std::to_string(k()) + " available");
  }
  const auto f = static_cast<Eigen::Index>(first);
  const auto c = static_cast<Eigen::Index>(count);
  return {mean, components.middleRows(f, c), explained_variance.segment(f, c), total_variance};
}

PcaModel fit_pca(const Eigen::MatrixXd& rows, std::size_t k) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto d = static_cast<std::size_t>(rows.cols());
  if (n < 2) fail(ErrorCode::InsufficientData, "PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    fail(ErrorCode::InvalidK, "k=" + std::to_string(k) + " outside [1, " +
                                  std::to_string(std::min(n - 1, d)) + "]");
  }

  PcaModel model;
  model.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - model.mean.transpose();
  const double denom = static_cast<double>(n - 1);
  model.total_variance = centered.squaredNorm() / denom;
  if (!(model.total_variance > 0.0)) fail(ErrorCode::DegenerateData, "data has zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  model.components = svd.matrixV().leftCols(kk).transpose();
  model.explained_variance = svd.singularValues().head(kk).array().square() / denom;

  for (Eigen::Index r = 0; r < kk; ++r) {
    Eigen::Index arg = 0;
    model.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (model.components(r, arg) < 0.0) model.components.row(r) *= -1.0;
  }
  return model;
}

PcaModel fit_pca_full(const Eigen::MatrixXd& rows) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto d = static_cast<std::size_t>(rows.cols());
  return fit_pca(rows, n < 2 ? 1 : std::min(n - 1, d));
}

}  // namespace styloscope
