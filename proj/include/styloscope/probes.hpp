#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "styloscope/pca.hpp"
#include "styloscope/store.hpp"

namespace styloscope {

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  bool converged = true;
};

/// Validation-split evaluation of a probe. `accuracy` is balanced accuracy in
/// percent (mean of the confusion diagonal); `raw_accuracy` is the
/// count-weighted fraction correct, also in percent.
struct ProbeReport {
  std::vector<std::string> classes;
  double accuracy = 0.0;
  double raw_accuracy = 0.0;
  std::vector<std::vector<double>> confusion;  // row-stochastic, rows = true class
  std::vector<double> per_class_accuracy;      // percent
  std::vector<std::size_t> class_counts;
  TrainMeta train_meta;
  std::vector<std::string> warnings;
};

/// Builds a report from true/predicted class indices.
ProbeReport make_report(std::vector<std::string> classes, std::span<const std::size_t> truth,
                        std::span<const std::size_t> predicted);

// --- linear SVM core ----------------------------------------------------------

struct LinearSvmOptions {
  double c = 1.0;
  double tolerance = 1e-6;
  std::size_t max_epochs = 10000;
  std::uint64_t seed = 0;
};

struct LinearSvm {
  Eigen::VectorXd w;
  double b = 0.0;
  std::size_t epochs = 0;
  bool converged = false;
  double objective = 0.0;  // primal: 0.5 (|w|^2 + b^2) + C * sum hinge
};

/// L2-regularized hinge loss, solved by dual coordinate descent. The bias is
/// an extra constant feature, so it is regularized with w. Labels are +1/-1.
LinearSvm train_linear_svm(const Eigen::MatrixXd& x, std::span<const int> y,
                           const LinearSvmOptions& options);

// --- linear probe -------------------------------------------------------------

struct LinearProbe {
  PcaModel pca;
  Eigen::VectorXd w;
  double b = 0.0;
  std::pair<std::string, std::string> classes;

  /// w . project(x) + b per row.
  Eigen::VectorXd decision(const Eigen::MatrixXd& rows) const;
  /// 0 for classes.first (decision >= 0, ties included), 1 for classes.second.
  std::vector<std::size_t> predict(const Eigen::MatrixXd& rows) const;

  std::size_t input_dim() const { return pca.dim(); }
};

struct LinearProbeConfig {
  double ratio = 0.7;
  std::uint64_t seed = 0;
  std::size_t pca_k = 64;  // clamped to min(train - 1, d)
  double reg_c = 1.0;
  double tolerance = 1e-6;
  std::size_t max_epochs = 10000;
};

struct LinearProbeFit {
  LinearProbe probe;
  ProbeReport report;
  SplitPair split_a;
  SplitPair split_b;
};

/// PCA on the pooled training rows, then the hinge-loss SVM in PCA space;
/// the report covers the held-out rows of both ensembles.
LinearProbeFit train_linear_probe(const Ensemble& a, const Ensemble& b,
                                  const LinearProbeConfig& cfg);

/// Same, on explicit row matrices.
LinearProbeFit train_linear_probe(const RowMatrixF& a, const RowMatrixF& b,
                                  std::pair<std::string, std::string> classes,
                                  const LinearProbeConfig& cfg);

/// Balanced accuracy (percent) of a frozen probe on all rows of a and b,
/// with a as classes.first and b as classes.second.
double evaluate_probe(const LinearProbe& p, const Ensemble& a, const Ensemble& b);
ProbeReport evaluate_probe_report(const LinearProbe& p, const RowMatrixF& a,
                                  const RowMatrixF& b);

// --- MLP probe ----------------------------------------------------------------

struct DenseLayer {
  Eigen::MatrixXf weight;  // in x out
  Eigen::RowVectorXf bias;  // out
};

/// Feed-forward classifier [d, 256, 32, K] with rectifier hidden layers.
/// Inputs are standardized with the training split's mean and scale.
struct MlpProbe {
  std::vector<std::string> classes;
  Eigen::RowVectorXf input_mean;
  Eigen::RowVectorXf input_scale;
  std::vector<DenseLayer> layers;

  std::vector<std::size_t> layer_sizes() const;
  std::size_t input_dim() const { return static_cast<std::size_t>(input_mean.size()); }

  /// Post-activation output of the last hidden layer.
  Eigen::MatrixXf penultimate(const RowMatrixF& rows) const;
  Eigen::MatrixXf logits(const RowMatrixF& rows) const;
  std::vector<std::size_t> predict(const RowMatrixF& rows) const;
};

struct MlpConfig {
  double ratio = 0.7;
  std::uint64_t seed = 0;
  std::size_t epochs = 200;
  std::size_t batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 10;
  std::vector<std::size_t> hidden = {256, 32};
};

struct LabeledEnsemble {
  std::string label;
  const Ensemble* ensemble = nullptr;
};

struct MlpFit {
  MlpProbe probe;
  ProbeReport report;
  double best_val_loss = 0.0;
};

/// Cross-entropy + Adam with early stopping on validation loss; the weights
/// with the best validation loss are kept.
MlpFit train_mlp_probe(std::span<const LabeledEnsemble> ensembles, const MlpConfig& cfg);

struct IntraExtra {
  double intra = 0.0;
  double extra = 0.0;
};

/// Mean off-diagonal confusion between same-author (intra) and
/// different-author (extra) label pairs.
IntraExtra intra_extra_confusion(const ProbeReport& report,
                                 const std::map<std::string, std::string>& author_of);

// --- grids ----------------------------------------------------------------------

using EnsembleLookup = std::function<std::optional<Ensemble>(
    const std::string& book_id, std::uint32_t n, std::uint32_t layer, std::uint32_t shuffle_block)>;

struct AccuracyGrid {
  std::vector<std::uint32_t> n_values;
  std::vector<std::uint32_t> layer_values;
  std::vector<std::vector<std::optional<double>>> cells;  // [n][layer]; nullopt = missing
};

/// One linear probe per (N, L) cell with a shared seed.
AccuracyGrid accuracy_grid(const std::string& book_a, const std::string& book_b,
                           std::span<const std::uint32_t> n_values,
                           std::span<const std::uint32_t> layer_values,
                           const EnsembleLookup& lookup, const LinearProbeConfig& cfg,
                           std::size_t workers = 1);

struct ShuffleVariant {
  std::uint32_t block = 0;
  const Ensemble* ensemble = nullptr;
};

struct ShuffleGrid {
  std::vector<std::uint32_t> a_blocks;  // rows
  std::vector<std::uint32_t> b_blocks;  // columns
  std::vector<std::vector<double>> cells;
};

ShuffleGrid shuffle_grid(std::span<const ShuffleVariant> a_variants,
                         std::span<const ShuffleVariant> b_variants,
                         const LinearProbeConfig& cfg, std::size_t workers = 1);

// --- serialization --------------------------------------------------------------

nlohmann::json to_json(const ProbeReport& report);
nlohmann::json to_json(const LinearProbe& probe);
LinearProbe linear_probe_from_json(const nlohmann::json& j);

}  // namespace styloscope
