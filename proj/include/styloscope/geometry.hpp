#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "styloscope/probes.hpp"
#include "styloscope/store.hpp"

namespace styloscope {

struct SubspaceSweep {
  std::size_t k_start = 1;  // 1-based index of the first principal component
  std::size_t n_dims = 1;
  double accuracy = 0.0;    // balanced validation accuracy, percent
};

/// For every (k, n) pair, projects both ensembles onto principal components
/// k..k+n-1 of the pooled training rows and trains a linear probe there
/// without further reduction.
std::vector<SubspaceSweep> subspace_probe_sweep(const Ensemble& a, const Ensemble& b,
                                                std::span<const std::size_t> k_values,
                                                std::span<const std::size_t> n_values,
                                                const LinearProbeConfig& cfg,
                                                std::size_t workers = 1);

struct IdEstimate {
  double id_hat = 0.0;
  std::size_t sample_count = 0;  // after duplicate removal
  double discarded_fraction = 0.0;
  std::size_t duplicates_removed = 0;
  std::string method = "TwoNN";
};

/// TwoNN intrinsic dimension. mu = r2 / r1 per point from exact nearest
/// neighbours; the largest `discard` fraction of mu is treated as censored at
/// the largest retained value and the Pareto exponent is estimated by
/// maximum likelihood: m / (sum_{retained} ln mu + (count - m) ln mu_cut).
IdEstimate twonn_id(const Eigen::MatrixXd& rows, double discard = 0.1, std::size_t workers = 1);

struct CentroidSet {
  std::vector<std::string> labels;
  Eigen::MatrixXd centroids;  // one row per label
  std::vector<std::size_t> counts;

  Eigen::VectorXd at(const std::string& label) const;
};

CentroidSet centroids(std::span<const LabeledEnsemble> ensembles);

/// 1 - cos(u, v), in [0, 2].
double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Cosine distance between separation vectors c(A) - c(B) and c(C) - c(D).
double separation_cosine(const CentroidSet& c, const std::pair<std::string, std::string>& pair1,
                         const std::pair<std::string, std::string>& pair2);

/// Cosine distance between two centroids directly (the alternative reading,
/// e.g. one author's French and English centroids).
double centroid_cosine_distance(const CentroidSet& c, const std::string& a, const std::string& b);

/// Pairwise cosine distances between all centroids.
Eigen::MatrixXd cosine_distance_matrix(const CentroidSet& c);

struct StyleMap2D {
  std::vector<std::string> labels;
  Eigen::MatrixXd coords;  // count x 2, centered at the origin
  double stress = 0.0;     // sum over i<j of (d_ij - delta_ij)^2
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
};

struct MdsOptions {
  std::size_t max_iterations = 300;
  double relative_tolerance = 1e-9;
  std::size_t random_starts = 4;
};

/// Metric MDS to 2-D by stress majorization (SMACOF). Runs from a classical
/// scaling start and from `random_starts` seeded random starts and keeps the
/// configuration with the lowest stress.
StyleMap2D mds_embed(const Eigen::MatrixXd& dist, std::uint64_t seed,
                     std::vector<std::string> labels = {}, const MdsOptions& options = {});

double mds_stress(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& dist);

/// Output of the MLP's 32-wide layer (post-rectifier), one row per input row.
Eigen::MatrixXf penultimate_activations(const MlpProbe& p, const Ensemble& e);

}  // namespace styloscope
