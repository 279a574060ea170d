#include "styloscope/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "styloscope/errors.hpp"
#include "styloscope/parallel.hpp"
#include "styloscope/rng.hpp"

namespace styloscope {

// --- subspace sweep -------------------------------------------------------------

std::vector<SubspaceSweep> subspace_probe_sweep(const Ensemble& a, const Ensemble& b,
                                                std::span<const std::size_t> k_values,
                                                std::span<const std::size_t> n_values,
                                                const LinearProbeConfig& cfg, std::size_t workers) {
  if (a.rows.cols() != b.rows.cols()) {
    fail(ErrorCode::IncompatibleEnsembles, "sweep ensembles have different hidden dimensions");
  }
  const auto split_a = split_train_val(a, cfg.ratio, cfg.seed);
  const auto split_b = split_train_val(b, cfg.ratio, cfg.seed);
  const RowMatrixF train_a = take_rows(a.rows, split_a.train);
  const RowMatrixF train_b = take_rows(b.rows, split_b.train);
  const RowMatrixF val_a = take_rows(a.rows, split_a.val);
  const RowMatrixF val_b = take_rows(b.rows, split_b.val);

  Eigen::MatrixXd train(train_a.rows() + train_b.rows(), train_a.cols());
  train.topRows(train_a.rows()) = train_a.cast<double>();
  train.bottomRows(train_b.rows()) = train_b.cast<double>();

  const std::size_t available = std::min<std::size_t>(static_cast<std::size_t>(train.rows()) - 1,
                                                      static_cast<std::size_t>(train.cols()));
  std::size_t needed = 0;
  for (auto k : k_values) {
    for (auto n : n_values) {
      if (k < 1 || n < 1) fail(ErrorCode::InvalidRange, "k and n must be >= 1");
      needed = std::max(needed, k + n - 1);
    }
  }
  if (needed > available) {
    fail(ErrorCode::InvalidRange, "sweep needs component " + std::to_string(needed) + " but only " +
                                      std::to_string(available) + " are available");
  }
  if (needed == 0) return {};
  const PcaModel pca = fit_pca(train, needed);

  std::vector<int> y(static_cast<std::size_t>(train.rows()), -1);
  std::fill(y.begin(), y.begin() + train_a.rows(), 1);

  std::vector<SubspaceSweep> out(k_values.size() * n_values.size());
  parallel_for(out.size(), workers, [&](std::size_t cell) {
    const auto k = k_values[cell / n_values.size()];
    const auto n = n_values[cell % n_values.size()];
    LinearProbe probe;
    probe.classes = {a.meta.book_id, b.meta.book_id};
    probe.pca = pca.subspace(k - 1, n);
    const auto svm = train_linear_svm(probe.pca.project(train), y,
                                      {cfg.reg_c, cfg.tolerance, cfg.max_epochs, cfg.seed});
    probe.w = svm.w;
    probe.b = svm.b;
    out[cell] = {k, n, evaluate_probe_report(probe, val_a, val_b).accuracy};
  });
  return out;
}

// --- TwoNN ----------------------------------------------------------------------

IdEstimate twonn_id(const Eigen::MatrixXd& rows, double discard, std::size_t workers) {
  if (!(discard >= 0.0 && discard < 1.0)) {
    fail(ErrorCode::InvalidArgument, "discard fraction must lie in [0, 1)");
  }
  // Exact duplicate removal: sort rows lexicographically and keep the first of each run.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index i, Eigen::Index j) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (rows(i, c) != rows(j, c)) return rows(i, c) < rows(j, c);
    }
    return i < j;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || rows.row(order[i]) != rows.row(order[i - 1])) keep.push_back(order[i]);
  }
  std::sort(keep.begin(), keep.end());

  const std::size_t n = keep.size();
  IdEstimate est;
  est.duplicates_removed = order.size() - n;
  est.sample_count = n;
  if (n < 20) {
    fail(ErrorCode::InsufficientData, "TwoNN needs at least 20 distinct points, got " + std::to_string(n));
  }

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(
      static_cast<Eigen::Index>(n), rows.cols());
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = rows.row(keep[i]);

  std::vector<double> mu(n, 0.0);
  std::vector<char> degenerate(n, 0);
  parallel_for(n, workers, [&](std::size_t i) {
    double r1 = std::numeric_limits<double>::infinity();
    double r2 = std::numeric_limits<double>::infinity();
    const auto xi = x.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (x.row(static_cast<Eigen::Index>(j)) - xi).squaredNorm();
      if (d2 < r1) {
        r2 = r1;
        r1 = d2;
      } else if (d2 < r2) {
        r2 = d2;
      }
    }
    if (!(r1 > 0.0)) {
      degenerate[i] = 1;
      return;
    }
    mu[i] = std::sqrt(r2 / r1);
  });
  if (std::any_of(degenerate.begin(), degenerate.end(), [](char c) { return c != 0; })) {
    fail(ErrorCode::DegenerateGeometry, "zero nearest-neighbour distance after deduplication");
  }

  std::sort(mu.begin(), mu.end());
  const auto dropped = static_cast<std::size_t>(std::llround(discard * static_cast<double>(n)));
  const std::size_t m = n - dropped;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) log_sum += std::log(mu[i]);
  log_sum += static_cast<double>(dropped) * std::log(mu[m - 1]);
  if (!(log_sum > 0.0)) fail(ErrorCode::DegenerateGeometry, "all neighbour ratios equal 1");

  est.id_hat = static_cast<double>(m) / log_sum;
  est.discarded_fraction = static_cast<double>(dropped) / static_cast<double>(n);
  return est;
}

// --- centroids and cosines ------------------------------------------------------

Eigen::VectorXd CentroidSet::at(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) fail(ErrorCode::InvalidArgument, "no centroid for label " + label);
  return centroids.row(it - labels.begin()).transpose();
}

CentroidSet centroids(std::span<const LabeledEnsemble> ensembles) {
  if (ensembles.empty()) fail(ErrorCode::InvalidArgument, "no ensembles");
  CentroidSet out;
  const auto d = ensembles.front().ensemble->rows.cols();
  out.centroids.resize(static_cast<Eigen::Index>(ensembles.size()), d);
  for (std::size_t i = 0; i < ensembles.size(); ++i) {
    const auto& rows = ensembles[i].ensemble->rows;
    if (rows.rows() == 0) fail(ErrorCode::InvalidArgument, ensembles[i].label + " is empty");
    if (rows.cols() != d) fail(ErrorCode::IncompatibleEnsembles, ensembles[i].label + " has a different dimension");
    out.labels.push_back(ensembles[i].label);
    out.counts.push_back(static_cast<std::size_t>(rows.rows()));
    out.centroids.row(static_cast<Eigen::Index>(i)) = rows.cast<double>().colwise().mean();
  }
  return out;
}

double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorCode::DegenerateGeometry, "zero-norm vector in cosine distance");
  return std::clamp(1.0 - u.dot(v) / (nu * nv), 0.0, 2.0);
}

double separation_cosine(const CentroidSet& c, const std::pair<std::string, std::string>& pair1,
                         const std::pair<std::string, std::string>& pair2) {
  return cosine_distance(c.at(pair1.first) - c.at(pair1.second), c.at(pair2.first) - c.at(pair2.second));
}

double centroid_cosine_distance(const CentroidSet& c, const std::string& a, const std::string& b) {
  return cosine_distance(c.at(a), c.at(b));
}

Eigen::MatrixXd cosine_distance_matrix(const CentroidSet& c) {
  const auto n = c.centroids.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = cosine_distance(c.centroids.row(i).transpose(), c.centroids.row(j).transpose());
    }
  }
  return d;
}

// --- MDS ------------------------------------------------------------------------

namespace {

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

Eigen::MatrixXd classical_scaling(const Eigen::MatrixXd& dist) {
  const auto n = dist.rows();
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd b = -0.5 * j * dist.array().square().matrix() * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 2);
  // Eigenvalues are ascending.
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, n); ++c) {
    const double lambda = eig.eigenvalues()[n - 1 - c];
    if (lambda > 0.0) x.col(c) = eig.eigenvectors().col(n - 1 - c) * std::sqrt(lambda);
  }
  return x;
}

struct SmacofRun {
  Eigen::MatrixXd x;
  double stress;
  std::size_t iterations;
};

SmacofRun smacof(const Eigen::MatrixXd& dist, Eigen::MatrixXd x, const MdsOptions& options) {
  const auto n = dist.rows();
  double stress = mds_stress(x, dist);
  std::size_t it = 0;
  Eigen::MatrixXd bmat(n, n);
  while (it < options.max_iterations && stress > 0.0) {
    const Eigen::MatrixXd d = pairwise_distances(x);
    for (Eigen::Index i = 0; i < n; ++i) {
      double diag = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        bmat(i, k) = d(i, k) > 0.0 ? -dist(i, k) / d(i, k) : 0.0;
        diag -= bmat(i, k);
      }
      bmat(i, i) = diag;
    }
    x = bmat * x / static_cast<double>(n);
    ++it;
    const double next = mds_stress(x, dist);
    const double change = (stress - next) / std::max(stress, std::numeric_limits<double>::min());
    stress = next;
    if (std::abs(change) < options.relative_tolerance) break;
  }
  return {std::move(x), stress, it};
}

}  // namespace

double mds_stress(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& dist) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < dist.rows(); ++j) {
      const double r = (coords.row(i) - coords.row(j)).norm() - dist(i, j);
      s += r * r;
    }
  }
  return s;
}

StyleMap2D mds_embed(const Eigen::MatrixXd& dist, std::uint64_t seed, std::vector<std::string> labels,
                     const MdsOptions& options) {
  const auto n = dist.rows();
  if (dist.cols() != n || n == 0) fail(ErrorCode::InvalidMatrix, "distance matrix must be square and non-empty");
  if (!dist.allFinite()) fail(ErrorCode::InvalidMatrix, "distance matrix has non-finite entries");
  if ((dist - dist.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    fail(ErrorCode::InvalidMatrix, "distance matrix is not symmetric");
  }
  if (dist.diagonal().cwiseAbs().maxCoeff() > 1e-9) fail(ErrorCode::InvalidMatrix, "diagonal must be zero");
  if (dist.minCoeff() < 0.0) fail(ErrorCode::InvalidMatrix, "distances must be non-negative");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    fail(ErrorCode::InvalidArgument, "label count does not match the matrix");
  }
  const Eigen::MatrixXd sym = 0.5 * (dist + dist.transpose());

  SmacofRun best = smacof(sym, classical_scaling(sym), options);
  const double spread = std::max(sym.maxCoeff(), 1e-12);
  for (std::size_t s = 0; s < options.random_starts && n > 2; ++s) {
    KeyedStream stream(seed, "mds-start", s);
    Eigen::MatrixXd x0(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < 2; ++c) x0(i, c) = spread * (stream.uniform() - 0.5);
    }
    auto run = smacof(sym, std::move(x0), options);
    if (run.stress < best.stress * (1.0 - 1e-9)) best = std::move(run);
  }

  StyleMap2D map;
  map.labels = std::move(labels);
  map.coords = best.x.rowwise() - best.x.colwise().mean();
  map.stress = mds_stress(map.coords, sym);
  map.seed = seed;
  map.iterations = best.iterations;
  return map;
}

Eigen::MatrixXf penultimate_activations(const MlpProbe& p, const Ensemble& e) {
  return p.penultimate(e.rows);
}

}  // namespace styloscope
