#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "styloscope/probes.hpp"
#include "test_util.hpp"

using namespace styloscope;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Three-sigma half-width, in percent, of balanced accuracy at chance for
// `per_class` validation rows per class and `k` classes.
double chance_band(std::size_t per_class, std::size_t k) {
  const double p = 1.0 / static_cast<double>(k);
  return 300.0 * std::sqrt(p * (1 - p) / static_cast<double>(per_class * k));
}

RowMatrixF shifted_rows(std::size_t n, std::size_t d, std::size_t axis, double offset,
                        std::mt19937_64& gen) {
  RowMatrixF m = gaussian_rows(n, d, 0.0, gen);
  m.col(static_cast<Eigen::Index>(axis)).array() += static_cast<float>(offset);
  return m;
}

}  // namespace

TEST_CASE("linear SVM matches the closed-form optimum on a symmetric pair") {
  // Points +1 and -1 on a line. By symmetry b = 0 and the primal is
  // 0.5 w^2 + 2C max(0, 1 - w), minimized at w = min(1, 2C).
  Eigen::MatrixXd x(2, 1);
  x << 1.0, -1.0;
  std::vector<int> y = {1, -1};
  for (double c : {1.0, 0.25}) {
    LinearSvm s = train_linear_svm(x, y, {c, 1e-10, 10000, 3});
    const double w = std::min(1.0, 2 * c);
    CHECK(s.w(0) == doctest::Approx(w).epsilon(1e-8));
    CHECK(std::abs(s.b) < 1e-8);
    CHECK(s.converged);
    CHECK(s.objective == doctest::Approx(0.5 * w * w + 2 * c * std::max(0.0, 1 - w)).epsilon(1e-8));
  }
}

TEST_CASE("well-separated Gaussians are classified almost perfectly") {
  std::mt19937_64 gen(11);
  auto a = make_ensemble("a", gaussian_rows(500, 64, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(500, 64, 6.0, gen));
  LinearProbeFit fit = train_linear_probe(a, b, {});
  // Bayes error for means 6 sigma apart is phi(-3) = 0.13%.
  CHECK(phi(-3.0) < 0.002);
  CHECK(fit.report.accuracy >= 99.0);
  CHECK(fit.report.class_counts == std::vector<std::size_t>{150, 150});
  CHECK(fit.split_a.train.size() == 350);
  CHECK(fit.probe.pca.k() == 64);
  CHECK(fit.report.warnings.empty());
}

TEST_CASE("identical distributions give chance accuracy") {
  std::mt19937_64 gen(12);
  auto a = make_ensemble("a", gaussian_rows(2000, 64, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(2000, 64, 0.0, gen));
  LinearProbeFit fit = train_linear_probe(a, b, {});
  CHECK(chance_band(600, 2) < 5.0);
  CHECK(std::abs(fit.report.accuracy - 50.0) <= 5.0);
}

TEST_CASE("identical rows under both labels score exactly 50") {
  std::mt19937_64 gen(13);
  auto a = make_ensemble("a", gaussian_rows(100, 8, 0.0, gen));
  LinearProbeFit fit = train_linear_probe(a, a, {});
  CHECK(fit.report.accuracy == 50.0);
}

TEST_CASE("permuted labels destroy the signal") {
  std::mt19937_64 gen(14);
  RowMatrixF pooled(1600, 32);
  pooled << gaussian_rows(800, 32, 0.0, gen), gaussian_rows(800, 32, 4.0, gen);
  std::vector<Eigen::Index> order(1600);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  RowMatrixF a(800, 32), b(800, 32);
  for (Eigen::Index i = 0; i < 800; ++i) {
    a.row(i) = pooled.row(order[static_cast<std::size_t>(i)]);
    b.row(i) = pooled.row(order[static_cast<std::size_t>(i + 800)]);
  }
  LinearProbeFit fit = train_linear_probe(a, b, {"a", "b"}, {});
  CHECK(std::abs(fit.report.accuracy - 50.0) <= chance_band(240, 2));
}

TEST_CASE("a common translation of all rows does not change predictions") {
  std::mt19937_64 gen(15);
  RowMatrixF a = gaussian_rows(300, 16, 0.0, gen);
  RowMatrixF b = gaussian_rows(300, 16, 1.0, gen);
  RowMatrixF shift = RowMatrixF::Constant(1, 16, 7.5f);
  RowMatrixF a2 = a.rowwise() + shift.row(0);
  RowMatrixF b2 = b.rowwise() + shift.row(0);
  auto f1 = train_linear_probe(a, b, {"a", "b"}, {});
  auto f2 = train_linear_probe(a2, b2, {"a", "b"}, {});
  CHECK(f1.report.accuracy == doctest::Approx(f2.report.accuracy));
  CHECK((f1.probe.w - f2.probe.w).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("training is deterministic for a fixed seed") {
  std::mt19937_64 gen(16);
  auto a = make_ensemble("a", gaussian_rows(200, 24, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(200, 24, 0.8, gen));
  LinearProbeConfig cfg;
  cfg.seed = 99;
  auto f1 = train_linear_probe(a, b, cfg);
  auto f2 = train_linear_probe(a, b, cfg);
  CHECK(f1.probe.w == f2.probe.w);
  CHECK(f1.probe.b == f2.probe.b);
  CHECK(f1.report.accuracy == f2.report.accuracy);
  cfg.seed = 100;
  auto f3 = train_linear_probe(a, b, cfg);
  CHECK(f3.split_a.val != f1.split_a.val);
}

TEST_CASE("pca_k is clamped with a warning") {
  std::mt19937_64 gen(17);
  auto a = make_ensemble("a", gaussian_rows(10, 64, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(10, 64, 5.0, gen));
  auto fit = train_linear_probe(a, b, {});
  CHECK(fit.probe.pca.k() == 13);  // 7 + 7 training rows
  REQUIRE(fit.report.warnings.size() == 1);
  CHECK(fit.report.warnings[0].find("clamped") != std::string::npos);
}

TEST_CASE("ties go to the first class") {
  LinearProbe p;
  p.pca.mean = Eigen::VectorXd::Zero(3);
  p.pca.components = Eigen::MatrixXd::Identity(2, 3);
  p.pca.explained_variance = Eigen::VectorXd::Ones(2);
  p.pca.total_variance = 3;
  p.w = Eigen::VectorXd::Zero(2);
  p.classes = {"a", "b"};
  auto pred = p.predict(Eigen::MatrixXd::Random(5, 3));
  CHECK(std::all_of(pred.begin(), pred.end(), [](std::size_t c) { return c == 0; }));
}

TEST_CASE("evaluating a frozen probe reproduces its validation report") {
  std::mt19937_64 gen(18);
  auto a = make_ensemble("a", gaussian_rows(200, 16, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(200, 16, 1.5, gen));
  auto fit = train_linear_probe(a, b, {});
  RowMatrixF va = take_rows(a.rows, fit.split_a.val);
  RowMatrixF vb = take_rows(b.rows, fit.split_b.val);
  ProbeReport r = evaluate_probe_report(fit.probe, va, vb);
  CHECK(r.accuracy == fit.report.accuracy);
  CHECK(r.confusion == fit.report.confusion);
  // A 1.5 sigma shift caps accuracy at phi(0.75) = 77.3%.
  CHECK(std::abs(evaluate_probe(fit.probe, a, b) - 100 * phi(0.75)) < 5.0);
}

TEST_CASE("report fields are mutually consistent") {
  std::vector<std::size_t> truth = {0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  std::vector<std::size_t> pred = {0, 1, 0, 1, 0, 2, 2, 1, 2, 0};
  ProbeReport r = make_report({"x", "y", "z"}, truth, pred);
  CHECK(r.class_counts == std::vector<std::size_t>{3, 2, 5});
  double diag = 0, correct = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), 0.0) == doctest::Approx(1.0));
    diag += r.confusion[i][i];
    correct += r.confusion[i][i] * static_cast<double>(r.class_counts[i]);
    CHECK(r.per_class_accuracy[i] == doctest::Approx(100 * r.confusion[i][i]));
  }
  CHECK(r.accuracy == doctest::Approx(100 * diag / 3));
  CHECK(r.raw_accuracy == doctest::Approx(100 * correct / 10));
  CHECK(r.raw_accuracy == doctest::Approx(60.0));
  CHECK(r.accuracy == doctest::Approx(100 * (2.0 / 3 + 0.5 + 0.6) / 3));
}

TEST_CASE("linear probe JSON round trip preserves decisions exactly") {
  std::mt19937_64 gen(19);
  auto a = make_ensemble("a", gaussian_rows(100, 12, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(100, 12, 1.0, gen));
  auto fit = train_linear_probe(a, b, {});
  LinearProbe back = linear_probe_from_json(nlohmann::json::parse(to_json(fit.probe).dump()));
  Eigen::MatrixXd x = a.rows.cast<double>();
  CHECK(back.decision(x) == fit.probe.decision(x));
  CHECK(back.classes == fit.probe.classes);
  auto bad = to_json(fit.probe);
  bad["version"] = 7;
  CHECK(error_code_of([&] { linear_probe_from_json(bad); }) == ErrorCode::Format);
  bad = to_json(fit.probe);
  bad["w"].push_back(1.0);
  CHECK(error_code_of([&] { linear_probe_from_json(bad); }) == ErrorCode::Format);
}

TEST_CASE("mismatched dimensions are rejected") {
  std::mt19937_64 gen(20);
  auto a = make_ensemble("a", gaussian_rows(50, 8, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(50, 9, 0.0, gen));
  CHECK(error_code_of([&] { train_linear_probe(a, b, {}); }) == ErrorCode::IncompatibleEnsembles);
  auto fit = train_linear_probe(a, a, {});
  CHECK(error_code_of([&] { evaluate_probe(fit.probe, b, b); }) == ErrorCode::IncompatibleEnsembles);
}

TEST_CASE("MLP separates three Gaussian classes") {
  std::mt19937_64 gen(21);
  std::vector<Ensemble> es;
  for (std::size_t c = 0; c < 3; ++c) es.push_back(make_ensemble("c" + std::to_string(c), shifted_rows(300, 32, c, 5.0, gen)));
  std::vector<LabeledEnsemble> le;
  for (auto& e : es) le.push_back({e.meta.book_id, &e});
  MlpFit fit = train_mlp_probe(le, {});
  CHECK(fit.probe.layer_sizes() == std::vector<std::size_t>{32, 256, 32, 3});
  CHECK(fit.report.accuracy >= 99.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(fit.report.confusion[i][i] >= 0.97);
  CHECK(fit.report.classes == std::vector<std::string>{"c0", "c1", "c2"});

  // The 32-wide layer still carries the classes linearly: one-vs-rest SVMs on
  // the penultimate activations classify the validation rows.
  Eigen::MatrixXd acts(900, 32);
  std::vector<std::size_t> label(900);
  for (std::size_t c = 0; c < 3; ++c) {
    acts.middleRows(static_cast<Eigen::Index>(300 * c), 300) = fit.probe.penultimate(es[c].rows).cast<double>();
    std::fill(label.begin() + static_cast<long>(300 * c), label.begin() + static_cast<long>(300 * (c + 1)), c);
  }
  Eigen::MatrixXd scores(900, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<int> y(900);
    for (std::size_t i = 0; i < 900; ++i) y[i] = label[i] == c ? 1 : -1;
    LinearSvm s = train_linear_svm(acts, y, {1.0, 1e-6, 2000, 0});
    scores.col(static_cast<Eigen::Index>(c)) = (acts * s.w).array() + s.b;
  }
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < 900; ++i) {
    Eigen::Index arg;
    scores.row(i).maxCoeff(&arg);
    correct += static_cast<std::size_t>(arg) == label[static_cast<std::size_t>(i)];
  }
  CHECK(correct >= 891);
}

TEST_CASE("MLP on indistinguishable classes stays at chance") {
  std::mt19937_64 gen(22);
  auto a = make_ensemble("a", gaussian_rows(1000, 16, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(1000, 16, 0.0, gen));
  std::vector<LabeledEnsemble> le = {{"a", &a}, {"b", &b}};
  MlpFit fit = train_mlp_probe(le, {});
  CHECK(std::abs(fit.report.accuracy - 50.0) <= chance_band(300, 2));
}

TEST_CASE("MLP training is deterministic and validates input") {
  std::mt19937_64 gen(23);
  auto a = make_ensemble("a", gaussian_rows(60, 8, 0.0, gen));
  auto b = make_ensemble("b", gaussian_rows(60, 8, 2.0, gen));
  std::vector<LabeledEnsemble> le = {{"a", &a}, {"b", &b}};
  MlpConfig cfg;
  cfg.epochs = 20;
  auto f1 = train_mlp_probe(le, cfg);
  auto f2 = train_mlp_probe(le, cfg);
  CHECK(f1.best_val_loss == f2.best_val_loss);
  CHECK(f1.probe.layers.back().weight == f2.probe.layers.back().weight);

  auto tiny = make_ensemble("t", gaussian_rows(9, 8, 0.0, gen));
  std::vector<LabeledEnsemble> bad = {{"a", &a}, {"t", &tiny}};
  CHECK(error_code_of([&] { train_mlp_probe(bad, cfg); }) == ErrorCode::InsufficientData);
  auto wide = make_ensemble("w", gaussian_rows(60, 9, 0.0, gen));
  bad = {{"a", &a}, {"w", &wide}};
  CHECK(error_code_of([&] { train_mlp_probe(bad, cfg); }) == ErrorCode::IncompatibleEnsembles);
}

TEST_CASE("intra/extra confusion on reference matrices") {
  ProbeReport r;
  r.classes = {"a1", "a2", "b1", "b2"};
  std::map<std::string, std::string> author = {{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}};
  r.confusion.assign(4, std::vector<double>(4, 0.0));
  for (int i = 0; i < 4; ++i) r.confusion[i][i] = 1.0;
  auto ie = intra_extra_confusion(r, author);
  CHECK(ie.intra == 0.0);
  CHECK(ie.extra == 0.0);

  r.confusion.assign(4, std::vector<double>(4, 0.25));
  ie = intra_extra_confusion(r, author);
  CHECK(ie.intra == doctest::Approx(0.25));
  CHECK(ie.extra == doctest::Approx(0.25));

  // Each class leaks 0.3 to its sibling and 0.1 to the other author's books.
  r.confusion = {{0.5, 0.3, 0.1, 0.1}, {0.3, 0.5, 0.1, 0.1}, {0.1, 0.1, 0.5, 0.3}, {0.1, 0.1, 0.3, 0.5}};
  ie = intra_extra_confusion(r, author);
  CHECK(ie.intra == doctest::Approx(0.3));
  CHECK(ie.extra == doctest::Approx(0.1));

  std::map<std::string, std::string> distinct = {{"a1", "A"}, {"a2", "B"}, {"b1", "C"}, {"b2", "D"}};
  CHECK(error_code_of([&] { intra_extra_confusion(r, distinct); }) == ErrorCode::IntraUndefined);
}

TEST_CASE("accuracy grid follows a monotone separation schedule") {
  // Class b is shifted by 0.6 (i + j) sigma at grid cell (i, j). The optimal
  // balanced accuracy phi(0.3 (i + j)) grows by at least 7 points per step
  // while a cell's sampling spread is under 1.5 points.
  const std::vector<std::uint32_t> ns = {8, 16, 32};
  const std::vector<std::uint32_t> layers = {0, 4, 8};
  EnsembleLookup lookup = [&](const std::string& book, std::uint32_t n, std::uint32_t layer,
                              std::uint32_t block) -> std::optional<Ensemble> {
    if (block != 0) return std::nullopt;
    if (book == "missing") return std::nullopt;
    const auto i = std::find(ns.begin(), ns.end(), n) - ns.begin();
    const auto j = std::find(layers.begin(), layers.end(), layer) - layers.begin();
    std::mt19937_64 gen(1000 + 10 * i + j + (book == "b" ? 500 : 0));
    const double offset = book == "b" ? 0.6 * static_cast<double>(i + j) : 0.0;
    auto e = make_ensemble(book, gaussian_rows(2000, 16, offset, gen));
    e.meta.n = n;
    e.meta.layer = layer;
    return e;
  };
  AccuracyGrid g = accuracy_grid("a", "b", ns, layers, lookup, {}, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(g.cells[i][j]);
      const double expected = 100 * phi(0.3 * static_cast<double>(i + j));
      CHECK(std::abs(*g.cells[i][j] - expected) < 4.5);
      if (i > 0) CHECK(*g.cells[i][j] > *g.cells[i - 1][j]);
      if (j > 0) CHECK(*g.cells[i][j] > *g.cells[i][j - 1]);
    }

  AccuracyGrid same = accuracy_grid("a", "a", ns, layers, lookup, {});
  for (const auto& row : same.cells)
    for (const auto& cell : row) CHECK(*cell == 50.0);

  AccuracyGrid holes = accuracy_grid("a", "missing", ns, layers, lookup, {});
  for (const auto& row : holes.cells)
    for (const auto& cell : row) CHECK_FALSE(cell.has_value());
}

TEST_CASE("shuffle grid cells equal direct probes") {
  std::mt19937_64 gen(24);
  auto a0 = make_ensemble("a", gaussian_rows(200, 8, 0.0, gen));
  auto a1 = make_ensemble("a", gaussian_rows(200, 8, 0.5, gen));
  auto b0 = make_ensemble("b", gaussian_rows(200, 8, 1.0, gen));
  a1.meta.shuffle_block = 4;
  std::vector<ShuffleVariant> av = {{64, &a0}, {4, &a1}};
  std::vector<ShuffleVariant> bv = {{64, &b0}};
  ShuffleGrid g = shuffle_grid(av, bv, {}, 2);
  CHECK(g.a_blocks == std::vector<std::uint32_t>{64, 4});
  CHECK(g.b_blocks == std::vector<std::uint32_t>{64});
  CHECK(g.cells[0][0] == train_linear_probe(a0, b0, {}).report.accuracy);
  CHECK(g.cells[1][0] == train_linear_probe(a1, b0, {}).report.accuracy);

  auto other = b0;
  other.meta.layer = 3;
  std::vector<ShuffleVariant> bad = {{64, &other}};
  CHECK(error_code_of([&] { shuffle_grid(av, bad, {}); }) == ErrorCode::IncompatibleEnsembles);
}

TEST_CASE("report JSON carries the headline fields") {
  ProbeReport r = make_report({"a", "b"}, std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 0});
  nlohmann::json j = to_json(r);
  CHECK(j["accuracy"] == 50.0);
  CHECK(j["classes"] == nlohmann::json({"a", "b"}));
  CHECK(j["confusion"][1][0] == 1.0);
}
