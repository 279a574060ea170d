#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "styloscope/geometry.hpp"
#include "test_util.hpp"

using namespace styloscope;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index d, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal(gen);
  return m;
}

Eigen::MatrixXd random_orthonormal(Eigen::Index d, Eigen::Index k, std::mt19937_64& gen) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(normal_matrix(d, k, gen));
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

Eigen::MatrixXd uniform_cube(Eigen::Index n, Eigen::Index d, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = u(gen);
  return m;
}

Eigen::MatrixXd euclidean(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  return d;
}

}  // namespace

TEST_CASE("TwoNN on a line in high dimension") {
  std::mt19937_64 gen(31);
  Eigen::VectorXd dir = normal_matrix(2048, 1, gen).col(0).normalized();
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Eigen::MatrixXd x(1000, 2048);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = u(gen) * dir.transpose();
  IdEstimate est = twonn_id(x, 0.1, 2);
  CHECK(std::abs(est.id_hat - 1.0) <= 0.15);
  CHECK(est.sample_count == 1000);
  CHECK(est.discarded_fraction == doctest::Approx(0.1));
  CHECK(est.method == "TwoNN");
}

TEST_CASE("TwoNN on a 5-D Gaussian embedded in 2048 dimensions") {
  std::mt19937_64 gen(32);
  Eigen::MatrixXd x = normal_matrix(2000, 5, gen) * random_orthonormal(2048, 5, gen).transpose();
  IdEstimate est = twonn_id(x, 0.1, 2);
  CHECK(std::abs(est.id_hat - 5.0) <= 1.0);
}

TEST_CASE("TwoNN on uniform hypercubes") {
  // Oracle (scipy KD-tree, same censored estimator, five seeds at n=5000):
  // D=1 -> 0.97..1.03, D=2 -> 1.99..2.06, D=5 -> 4.46..4.82, D=10 -> 8.50..8.70.
  // Boundary effects bias the estimate low as D grows; all stay inside 20%.
  for (Eigen::Index d : {1, 2, 5, 10}) {
    std::mt19937_64 gen(40 + static_cast<std::uint64_t>(d));
    IdEstimate est = twonn_id(uniform_cube(5000, d, gen), 0.1, 2);
    INFO("D=" << d << " id_hat=" << est.id_hat);
    CHECK(std::abs(est.id_hat - static_cast<double>(d)) <= 0.2 * static_cast<double>(d));
  }
}

TEST_CASE("TwoNN is invariant to isometries and scaling") {
  std::mt19937_64 gen(33);
  Eigen::MatrixXd x = uniform_cube(400, 3, gen);
  const double base = twonn_id(x).id_hat;
  Eigen::MatrixXd q = random_orthonormal(3, 3, gen);
  Eigen::MatrixXd moved = (x * q).rowwise() + Eigen::RowVector3d(4.0, -2.0, 9.0);
  CHECK(twonn_id(moved).id_hat == doctest::Approx(base).epsilon(1e-9));
  CHECK(twonn_id(x * 3.7).id_hat == doctest::Approx(base).epsilon(1e-9));
  CHECK(twonn_id(x * 0.25).id_hat == base);
}

TEST_CASE("TwoNN removes exact duplicates and rejects degenerate input") {
  std::mt19937_64 gen(34);
  Eigen::MatrixXd x = uniform_cube(100, 2, gen);
  Eigen::MatrixXd doubled(200, 2);
  doubled << x, x;
  IdEstimate a = twonn_id(x);
  IdEstimate b = twonn_id(doubled);
  CHECK(b.duplicates_removed == 100);
  CHECK(b.sample_count == 100);
  CHECK(b.id_hat == a.id_hat);

  Eigen::MatrixXd few(40, 2);
  few << x.topRows(19), x.topRows(19), x.topRows(2);
  CHECK(error_code_of([&] { twonn_id(few); }) == ErrorCode::InsufficientData);
  CHECK(error_code_of([&] { twonn_id(x, 1.0); }) == ErrorCode::InvalidArgument);

  // Integer lattice: every point has two neighbours at distance exactly 1,
  // so every ratio r2/r1 is 1.
  Eigen::MatrixXd lattice(25, 2);
  for (Eigen::Index i = 0; i < 25; ++i) lattice.row(i) << static_cast<double>(i / 5), static_cast<double>(i % 5);
  CHECK(error_code_of([&] { twonn_id(lattice); }) == ErrorCode::DegenerateGeometry);
}

TEST_CASE("subspace sweep over the full space matches an unrestricted probe") {
  std::mt19937_64 gen(35);
  auto a = make_ensemble("a", gaussian_rows(300, 16, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(300, 16, 1.2, gen));
  LinearProbeConfig cfg;
  cfg.pca_k = 16;
  std::vector<std::size_t> k = {1}, n = {16};
  auto sweep = subspace_probe_sweep(a, b, k, n, cfg);
  REQUIRE(sweep.size() == 1);
  double full = train_linear_probe(a, b, cfg).report.accuracy;
  CHECK(std::abs(sweep[0].accuracy - full) <= 1.0);
}

TEST_CASE("subspace sweep finds signal only in the leading components") {
  // The class difference lives on axis 0. A +-5 offset on unit within-class
  // noise gives it pooled variance 26, above every noise axis (sd 3.8 down
  // to 0.5), so it is PC 1 and the remaining components carry no signal.
  std::mt19937_64 gen(36);
  const Eigen::Index d = 16;
  Eigen::VectorXd sd = Eigen::VectorXd::LinSpaced(d, 4.0, 0.5);
  auto rows = [&](double offset) {
    RowMatrixF m(600, d);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        m(i, j) = static_cast<float>(normal(gen) * (j == 0 ? 1.0 : sd(j)) + (j == 0 ? offset : 0.0));
    return m;
  };
  auto a = make_ensemble("a", rows(-5.0));
  auto b = make_ensemble("b", rows(5.0));
  std::vector<std::size_t> k = {1, 3, 8}, n = {1, 2};
  auto sweep = subspace_probe_sweep(a, b, k, n, {}, 2);
  REQUIRE(sweep.size() == 6);
  CHECK(sweep[0].k_start == 1);
  CHECK(sweep[0].n_dims == 1);
  CHECK(sweep[0].accuracy >= 99.0);
  for (std::size_t i = 2; i < 6; ++i) {
    INFO("k=" << sweep[i].k_start << " n=" << sweep[i].n_dims);
    CHECK(std::abs(sweep[i].accuracy - 50.0) <= 300.0 * std::sqrt(0.25 / 360.0));
  }
  std::vector<std::size_t> too_far = {16};
  CHECK(error_code_of([&] { subspace_probe_sweep(a, b, too_far, n, {}); }) == ErrorCode::InvalidRange);
}

TEST_CASE("centroids and cosine distances") {
  RowMatrixF ra(2, 3), rb(2, 3), rc(1, 3);
  ra << 1, 0, 0, 3, 0, 0;
  rb << 0, 1, 0, 0, 3, 0;
  rc << 0, 0, 5;
  auto a = make_ensemble("a", ra), b = make_ensemble("b", rb), c = make_ensemble("c", rc);
  std::vector<LabeledEnsemble> le = {{"a", &a}, {"b", &b}, {"c", &c}};
  CentroidSet cs = centroids(le);
  CHECK(cs.at("a").isApprox(Eigen::Vector3d(2, 0, 0)));
  CHECK(cs.counts == std::vector<std::size_t>{2, 2, 1});
  CHECK(centroid_cosine_distance(cs, "a", "b") == doctest::Approx(1.0));
  CHECK(centroid_cosine_distance(cs, "a", "a") == doctest::Approx(0.0));
  CHECK(separation_cosine(cs, {"a", "b"}, {"a", "b"}) == doctest::Approx(0.0));
  CHECK(separation_cosine(cs, {"a", "b"}, {"b", "a"}) == doctest::Approx(2.0));
  // (2,-2,0) vs (2,0,-5): cos = 4 / (sqrt(8) sqrt(29)).
  CHECK(separation_cosine(cs, {"a", "b"}, {"a", "c"}) ==
        doctest::Approx(1.0 - 4.0 / (std::sqrt(8.0) * std::sqrt(29.0))));
  Eigen::MatrixXd m = cosine_distance_matrix(cs);
  CHECK(m.isApprox(m.transpose()));
  CHECK(m.diagonal().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(error_code_of([&] { (void)cs.at("z"); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { cosine_distance(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()); }) ==
        ErrorCode::DegenerateGeometry);
}

TEST_CASE("random separation vectors are nearly orthogonal") {
  // For independent isotropic directions in d=2048, 1 - cos has mean 1 and
  // sd 1/sqrt(2048). Over 1000 trials about 0.27% land outside 3 sd, so the
  // check is on the sample statistics rather than on every trial.
  std::mt19937_64 gen(37);
  const double sd = 1.0 / std::sqrt(2048.0);
  std::vector<double> v;
  for (int t = 0; t < 1000; ++t) {
    v.push_back(cosine_distance(normal_matrix(2048, 1, gen).col(0), normal_matrix(2048, 1, gen).col(0)));
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 1000.0;
  double ss = 0;
  std::size_t outside = 0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
    outside += std::abs(x - 1.0) > 3 * sd;
  }
  CHECK(std::abs(mean - 1.0) <= 3 * sd / std::sqrt(1000.0));
  CHECK(std::sqrt(ss / 999.0) == doctest::Approx(sd).epsilon(0.1));
  CHECK(outside <= 10);
}

TEST_CASE("MDS recovers an equilateral triangle") {
  Eigen::Matrix3d d;
  d << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  StyleMap2D m = mds_embed(d, 5, {"x", "y", "z"});
  CHECK(m.stress < 1e-8);
  CHECK(euclidean(m.coords).isApprox(d, 1e-6));
  CHECK(m.coords.colwise().sum().norm() < 1e-9);
  CHECK(m.labels == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("MDS recovers planar configurations up to isometry") {
  std::mt19937_64 gen(38);
  Eigen::MatrixXd pts = normal_matrix(12, 2, gen);
  Eigen::MatrixXd d = euclidean(pts);
  StyleMap2D m = mds_embed(d, 1);
  CHECK(m.stress < 1e-8);
  Eigen::MatrixXd got = euclidean(m.coords);
  CHECK((got - d).cwiseAbs().maxCoeff() / d.maxCoeff() < 1e-6);
  CHECK(mds_stress(m.coords, d) == doctest::Approx(m.stress).epsilon(1e-9));

  // Relabelling the points permutes the output rows.
  std::vector<Eigen::Index> perm = {3, 0, 7, 1, 11, 2, 5, 4, 10, 6, 9, 8};
  Eigen::MatrixXd dp(12, 12);
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = 0; j < 12; ++j) dp(i, j) = d(perm[i], perm[j]);
  StyleMap2D mp = mds_embed(dp, 1);
  Eigen::MatrixXd gotp = euclidean(mp.coords);
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = 0; j < 12; ++j) CHECK(gotp(i, j) == doctest::Approx(got(perm[i], perm[j])).epsilon(1e-6));
}

TEST_CASE("MDS is deterministic and never worse than its classical start") {
  std::mt19937_64 gen(39);
  Eigen::MatrixXd d = euclidean(normal_matrix(15, 6, gen));
  StyleMap2D a = mds_embed(d, 42), b = mds_embed(d, 42);
  CHECK(a.coords == b.coords);
  CHECK(a.seed == 42);
  MdsOptions no_restarts;
  no_restarts.random_starts = 0;
  no_restarts.max_iterations = 0;
  StyleMap2D start = mds_embed(d, 42, {}, no_restarts);
  CHECK(a.stress <= start.stress);
}

TEST_CASE("MDS rejects invalid matrices") {
  Eigen::Matrix3d d;
  d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  Eigen::Matrix3d asym = d;
  asym(0, 1) = 1.1;
  CHECK(error_code_of([&] { mds_embed(asym, 0); }) == ErrorCode::InvalidMatrix);
  Eigen::Matrix3d diag = d;
  diag(1, 1) = 0.5;
  CHECK(error_code_of([&] { mds_embed(diag, 0); }) == ErrorCode::InvalidMatrix);
  Eigen::Matrix3d neg = d;
  neg(0, 2) = neg(2, 0) = -1;
  CHECK(error_code_of([&] { mds_embed(neg, 0); }) == ErrorCode::InvalidMatrix);
  CHECK(error_code_of([&] { mds_embed(Eigen::MatrixXd::Zero(2, 3), 0); }) == ErrorCode::InvalidMatrix);
  CHECK(error_code_of([&] { mds_embed(d, 0, {"a"}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("penultimate activations of a zero-weight network equal relu(bias)") {
  MlpProbe p;
  p.classes = {"a", "b"};
  p.input_mean = Eigen::RowVectorXf::Zero(4);
  p.input_scale = Eigen::RowVectorXf::Ones(4);
  std::vector<std::size_t> sizes = {4, 256, 32, 2};
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    l.weight = Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(sizes[i]), static_cast<Eigen::Index>(sizes[i + 1]));
    l.bias = Eigen::RowVectorXf::LinSpaced(static_cast<Eigen::Index>(sizes[i + 1]), -1.0f, 1.0f);
    p.layers.push_back(l);
  }
  std::mt19937_64 gen(40);
  auto e = make_ensemble("a", gaussian_rows(7, 4, 0.0, gen));
  Eigen::MatrixXf acts = penultimate_activations(p, e);
  REQUIRE(acts.rows() == 7);
  REQUIRE(acts.cols() == 32);
  Eigen::RowVectorXf expect = p.layers[1].bias.cwiseMax(0.0f);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(acts.row(i) == expect);
  CHECK(p.layer_sizes() == sizes);
}
