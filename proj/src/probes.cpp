#include "styloscope/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "styloscope/errors.hpp"
#include "styloscope/parallel.hpp"
#include "styloscope/rng.hpp"

namespace styloscope {
namespace {

Eigen::MatrixXd to_double(const RowMatrixF& m) { return m.cast<double>(); }

Eigen::MatrixXd vstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

void check_same_dim(const RowMatrixF& a, const RowMatrixF& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::IncompatibleEnsembles, "ensembles have dimensions " + std::to_string(a.cols()) +
                                               " and " + std::to_string(b.cols()));
  }
}

}  // namespace

ProbeReport make_report(std::vector<std::string> classes, std::span<const std::size_t> truth,
                        std::span<const std::size_t> predicted) {
  const std::size_t k = classes.size();
  ProbeReport r;
  r.classes = std::move(classes);
  r.class_counts.assign(k, 0);
  std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++counts[truth[i]][predicted[i]];
    ++r.class_counts[truth[i]];
    correct += truth[i] == predicted[i];
  }
  r.confusion.assign(k, std::vector<double>(k, 0.0));
  r.per_class_accuracy.assign(k, 0.0);
  double diag = 0.0;
  std::size_t present = 0;
  for (std::size_t t = 0; t < k; ++t) {
    if (r.class_counts[t] == 0) continue;
    ++present;
    for (std::size_t p = 0; p < k; ++p) {
      r.confusion[t][p] = static_cast<double>(counts[t][p]) / static_cast<double>(r.class_counts[t]);
    }
    r.per_class_accuracy[t] = 100.0 * r.confusion[t][t];
    diag += r.confusion[t][t];
  }
  r.accuracy = present ? 100.0 * diag / static_cast<double>(present) : 0.0;
  r.raw_accuracy = truth.empty() ? 0.0
                                 : 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
  return r;
}

// --- linear SVM -----------------------------------------------------------------

LinearSvm train_linear_svm(const Eigen::MatrixXd& x, std::span<const int> y,
                           const LinearSvmOptions& options) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0 || y.size() != n) fail(ErrorCode::InvalidArgument, "SVM needs one label per row");
  const auto d = x.cols();

  // Row-major copy with the constant bias feature appended.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xa(x.rows(), d + 1);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Eigen::VectorXd q = xa.rowwise().squaredNorm();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  std::vector<double> alpha(n, 0.0);
  const double c = options.c;
  KeyedStream stream(options.seed, "linear-svm");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  LinearSvm out;
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    stream.shuffle(order);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const auto row = xa.row(static_cast<Eigen::Index>(i));
      const double yi = y[i];
      const double g = yi * row.dot(w) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= c) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0 && q[static_cast<Eigen::Index>(i)] > 0.0) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / q[static_cast<Eigen::Index>(i)], 0.0, c);
        w.noalias() += ((alpha[i] - old) * yi) * row.transpose();
      }
    }
    out.epochs = epoch + 1;
    if (pg_max - pg_min < options.tolerance) {
      out.converged = true;
      break;
    }
  }

  out.w = w.head(d);
  out.b = w[d];
  const Eigen::VectorXd margins = xa * w;
  double hinge = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    hinge += std::max(0.0, 1.0 - y[i] * margins[static_cast<Eigen::Index>(i)]);
  }
  out.objective = 0.5 * w.squaredNorm() + c * hinge;
  return out;
}

// --- linear probe -----------------------------------------------------------------

Eigen::VectorXd LinearProbe::decision(const Eigen::MatrixXd& rows) const {
  return (pca.project(rows) * w).array() + b;
}

std::vector<std::size_t> LinearProbe::predict(const Eigen::MatrixXd& rows) const {
  const Eigen::VectorXd f = decision(rows);
  std::vector<std::size_t> out(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) out[static_cast<std::size_t>(i)] = f[i] >= 0.0 ? 0 : 1;
  return out;
}

LinearProbeFit train_linear_probe(const RowMatrixF& a, const RowMatrixF& b,
                                  std::pair<std::string, std::string> classes,
                                  const LinearProbeConfig& cfg) {
  check_same_dim(a, b);
  LinearProbeFit fit;
  fit.split_a = split_train_val(static_cast<std::size_t>(a.rows()), cfg.ratio, cfg.seed);
  fit.split_b = split_train_val(static_cast<std::size_t>(b.rows()), cfg.ratio, cfg.seed);

  const Eigen::MatrixXd train_a = to_double(take_rows(a, fit.split_a.train));
  const Eigen::MatrixXd train_b = to_double(take_rows(b, fit.split_b.train));
  const Eigen::MatrixXd train = vstack(train_a, train_b);

  const auto max_k = std::min<std::size_t>(static_cast<std::size_t>(train.rows()) - 1,
                                           static_cast<std::size_t>(train.cols()));
  const std::size_t k = std::clamp<std::size_t>(cfg.pca_k, 1, max_k);

  LinearProbe& probe = fit.probe;
  probe.classes = std::move(classes);
  probe.pca = fit_pca(train, k);

  std::vector<int> y(static_cast<std::size_t>(train.rows()), -1);
  std::fill(y.begin(), y.begin() + train_a.rows(), 1);
  const auto svm = train_linear_svm(probe.pca.project(train), y,
                                    {cfg.reg_c, cfg.tolerance, cfg.max_epochs, cfg.seed});
  probe.w = svm.w;
  probe.b = svm.b;

  fit.report = evaluate_probe_report(probe, take_rows(a, fit.split_a.val), take_rows(b, fit.split_b.val));
  fit.report.train_meta = {cfg.seed, svm.epochs, svm.objective, svm.converged};
  if (k != cfg.pca_k) {
    fit.report.warnings.push_back("pca_k clamped from " + std::to_string(cfg.pca_k) + " to " +
                                  std::to_string(k));
  }
  if (!svm.converged) {
    fit.report.warnings.push_back("linear SVM did not reach tolerance within " +
                                  std::to_string(svm.epochs) + " epochs");
  }
  return fit;
}

LinearProbeFit train_linear_probe(const Ensemble& a, const Ensemble& b, const LinearProbeConfig& cfg) {
  if (a.meta.hidden_dim != b.meta.hidden_dim) {
    fail(ErrorCode::IncompatibleEnsembles, a.meta.book_id + " and " + b.meta.book_id +
                                               " have different hidden dimensions");
  }
  return train_linear_probe(a.rows, b.rows, {a.meta.book_id, b.meta.book_id}, cfg);
}

ProbeReport evaluate_probe_report(const LinearProbe& p, const RowMatrixF& a, const RowMatrixF& b) {
  check_same_dim(a, b);
  if (static_cast<std::size_t>(a.cols()) != p.input_dim()) {
    fail(ErrorCode::IncompatibleEnsembles, "probe expects dimension " + std::to_string(p.input_dim()) +
                                               ", ensembles have " + std::to_string(a.cols()));
  }
  const auto pred_a = p.predict(to_double(a));
  const auto pred_b = p.predict(to_double(b));
  std::vector<std::size_t> truth(pred_a.size(), 0);
  truth.resize(pred_a.size() + pred_b.size(), 1);
  std::vector<std::size_t> predicted = pred_a;
  predicted.insert(predicted.end(), pred_b.begin(), pred_b.end());
  return make_report({p.classes.first, p.classes.second}, truth, predicted);
}

double evaluate_probe(const LinearProbe& p, const Ensemble& a, const Ensemble& b) {
  return evaluate_probe_report(p, a.rows, b.rows).accuracy;
}

// --- MLP --------------------------------------------------------------------------

namespace {

Eigen::MatrixXf standardize(const MlpProbe& p, const RowMatrixF& rows) {
  Eigen::MatrixXf x = rows;
  x.rowwise() -= p.input_mean;
  x.array().rowwise() /= p.input_scale.array();
  return x;
}

void relu_inplace(Eigen::MatrixXf& m) { m = m.cwiseMax(0.0f); }

// Returns the mean cross-entropy and, if requested, writes softmax(logits) - onehot.
double cross_entropy(const Eigen::MatrixXf& logits, std::span<const std::size_t> labels,
                     Eigen::MatrixXf* grad) {
  const Eigen::Index n = logits.rows();
  double loss = 0.0;
  if (grad) grad->resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const float mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXf e = (logits.row(i).array() - mx).exp();
    const float sum = e.sum();
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    loss -= static_cast<double>(logits(i, label) - mx) - std::log(static_cast<double>(sum));
    if (grad) {
      grad->row(i) = e / sum;
      (*grad)(i, label) -= 1.0f;
    }
  }
  return loss / static_cast<double>(n);
}

struct AdamState {
  Eigen::MatrixXf mw, vw;
  Eigen::RowVectorXf mb, vb;
};

}  // namespace

std::vector<std::size_t> MlpProbe::layer_sizes() const {
  std::vector<std::size_t> sizes{input_dim()};
  for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weight.cols()));
  return sizes;
}

Eigen::MatrixXf MlpProbe::penultimate(const RowMatrixF& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != input_dim()) {
    fail(ErrorCode::IncompatibleEnsembles, "MLP expects dimension " + std::to_string(input_dim()) +
                                               ", got " + std::to_string(rows.cols()));
  }
  Eigen::MatrixXf a = standardize(*this, rows);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    a = (a * layers[l].weight).rowwise() + layers[l].bias;
    relu_inplace(a);
  }
  return a;
}

Eigen::MatrixXf MlpProbe::logits(const RowMatrixF& rows) const {
  const auto& out = layers.back();
  return (penultimate(rows) * out.weight).rowwise() + out.bias;
}

std::vector<std::size_t> MlpProbe::predict(const RowMatrixF& rows) const {
  const Eigen::MatrixXf z = logits(rows);
  std::vector<std::size_t> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
  }
  return out;
}

MlpFit train_mlp_probe(std::span<const LabeledEnsemble> ensembles, const MlpConfig& cfg) {
  if (ensembles.size() < 2) fail(ErrorCode::InsufficientData, "MLP probe needs at least 2 classes");
  if (cfg.batch == 0 || cfg.hidden.empty()) fail(ErrorCode::InvalidArgument, "bad MLP configuration");
  const auto d = ensembles.front().ensemble->rows.cols();
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<SplitPair> splits;
  for (const auto& le : ensembles) {
    const auto& e = *le.ensemble;
    if (e.rows.cols() != d) {
      fail(ErrorCode::IncompatibleEnsembles, le.label + " has a different hidden dimension");
    }
    if (e.count() < 10) {
      fail(ErrorCode::InsufficientData, le.label + " has " + std::to_string(e.count()) +
                                            " rows; at least 10 are required");
    }
    splits.push_back(split_train_val(e, cfg.ratio, cfg.seed));
    n_train += splits.back().train.size();
    n_val += splits.back().val.size();
  }

  RowMatrixF train_x(static_cast<Eigen::Index>(n_train), d);
  RowMatrixF val_x(static_cast<Eigen::Index>(n_val), d);
  std::vector<std::size_t> train_y;
  std::vector<std::size_t> val_y;
  {
    Eigen::Index ti = 0;
    Eigen::Index vi = 0;
    for (std::size_t c = 0; c < ensembles.size(); ++c) {
      const auto& rows = ensembles[c].ensemble->rows;
      for (auto r : splits[c].train) {
        train_x.row(ti++) = rows.row(static_cast<Eigen::Index>(r));
        train_y.push_back(c);
      }
      for (auto r : splits[c].val) {
        val_x.row(vi++) = rows.row(static_cast<Eigen::Index>(r));
        val_y.push_back(c);
      }
    }
  }

  MlpFit fit;
  MlpProbe& p = fit.probe;
  for (const auto& le : ensembles) p.classes.push_back(le.label);
  p.input_mean = train_x.colwise().mean();
  const Eigen::RowVectorXf var =
      (train_x.rowwise() - p.input_mean).array().square().colwise().mean();
  p.input_scale = var.array().sqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(p.input_scale[j] > 1e-6f)) p.input_scale[j] = 1.0f;
  }

  std::vector<std::size_t> sizes{static_cast<std::size_t>(d)};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(ensembles.size());
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    KeyedStream init(cfg.seed, "mlp-init", l);
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXf(in, out), Eigen::RowVectorXf::Zero(out)};
    for (Eigen::Index j = 0; j < out; ++j) {
      for (Eigen::Index i = 0; i < in; ++i) layer.weight(i, j) = static_cast<float>(scale * init.normal());
    }
    p.layers.push_back(std::move(layer));
  }

  const Eigen::MatrixXf train_std = standardize(p, train_x);
  std::vector<AdamState> adam;
  for (const auto& l : p.layers) {
    adam.push_back({Eigen::MatrixXf::Zero(l.weight.rows(), l.weight.cols()),
                    Eigen::MatrixXf::Zero(l.weight.rows(), l.weight.cols()),
                    Eigen::RowVectorXf::Zero(l.bias.size()), Eigen::RowVectorXf::Zero(l.bias.size())});
  }

  const std::size_t depth = p.layers.size();
  std::vector<Eigen::MatrixXf> acts(depth + 1);
  std::vector<Eigen::MatrixXf> grads_w(depth);
  std::vector<Eigen::RowVectorXf> grads_b(depth);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> batch_y;

  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto eps = static_cast<float>(cfg.epsilon);
  std::size_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<DenseLayer> best_layers = p.layers;
  std::size_t since_best = 0;
  double last_train_loss = 0.0;
  std::size_t epochs_run = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    KeyedStream shuffle(cfg.seed, "mlp-epoch", epoch);
    shuffle.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch) {
      const std::size_t stop = std::min(n_train, start + cfg.batch);
      const auto bs = static_cast<Eigen::Index>(stop - start);
      acts[0].resize(bs, d);
      batch_y.clear();
      for (std::size_t i = start; i < stop; ++i) {
        acts[0].row(static_cast<Eigen::Index>(i - start)) = train_std.row(static_cast<Eigen::Index>(order[i]));
        batch_y.push_back(train_y[order[i]]);
      }
      for (std::size_t l = 0; l < depth; ++l) {
        acts[l + 1] = (acts[l] * p.layers[l].weight).rowwise() + p.layers[l].bias;
        if (l + 1 < depth) relu_inplace(acts[l + 1]);
      }
      Eigen::MatrixXf delta;
      epoch_loss += cross_entropy(acts[depth], batch_y, &delta) * static_cast<double>(bs);
      delta /= static_cast<float>(bs);
      for (std::size_t l = depth; l-- > 0;) {
        grads_w[l] = acts[l].transpose() * delta;
        grads_b[l] = delta.colwise().sum();
        if (l > 0) {
          Eigen::MatrixXf back = delta * p.layers[l].weight.transpose();
          delta = (acts[l].array() > 0.0f).select(back, 0.0f);
        }
      }
      ++step;
      const float lr_t = static_cast<float>(cfg.lr * std::sqrt(1.0 - std::pow(cfg.beta2, step)) /
                                            (1.0 - std::pow(cfg.beta1, step)));
      for (std::size_t l = 0; l < depth; ++l) {
        auto& s = adam[l];
        s.mw = b1 * s.mw + (1.0f - b1) * grads_w[l];
        s.vw = b2 * s.vw + (1.0f - b2) * grads_w[l].cwiseProduct(grads_w[l]);
        s.mb = b1 * s.mb + (1.0f - b1) * grads_b[l];
        s.vb = b2 * s.vb + (1.0f - b2) * grads_b[l].cwiseProduct(grads_b[l]);
        p.layers[l].weight.array() -= lr_t * s.mw.array() / (s.vw.array().sqrt() + eps);
        p.layers[l].bias.array() -= lr_t * s.mb.array() / (s.vb.array().sqrt() + eps);
      }
    }
    last_train_loss = epoch_loss / static_cast<double>(n_train);
    epochs_run = epoch + 1;

    const double val_loss = cross_entropy(p.logits(val_x), val_y, nullptr);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_layers = p.layers;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  p.layers = std::move(best_layers);

  fit.best_val_loss = best_val;
  fit.report = make_report(p.classes, val_y, p.predict(val_x));
  fit.report.train_meta = {cfg.seed, epochs_run, last_train_loss, true};
  return fit;
}

IntraExtra intra_extra_confusion(const ProbeReport& report,
                                 const std::map<std::string, std::string>& author_of) {
  const std::size_t k = report.classes.size();
  if (report.confusion.size() != k) fail(ErrorCode::InvalidArgument, "confusion is not K x K");
  std::vector<std::string> authors;
  for (const auto& label : report.classes) {
    auto it = author_of.find(label);
    if (it == author_of.end()) fail(ErrorCode::InvalidArgument, "no author for label " + label);
    authors.push_back(it->second);
  }
  double intra = 0.0;
  double extra = 0.0;
  std::size_t n_intra = 0;
  std::size_t n_extra = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (authors[i] == authors[j]) {
        intra += report.confusion[i][j];
        ++n_intra;
      } else {
        extra += report.confusion[i][j];
        ++n_extra;
      }
    }
  }
  if (n_intra == 0) fail(ErrorCode::IntraUndefined, "no two labels share an author");
  if (n_extra == 0) fail(ErrorCode::InvalidArgument, "every label has the same author");
  return {intra / static_cast<double>(n_intra), extra / static_cast<double>(n_extra)};
}

// --- grids ------------------------------------------------------------------------

AccuracyGrid accuracy_grid(const std::string& book_a, const std::string& book_b,
                           std::span<const std::uint32_t> n_values,
                           std::span<const std::uint32_t> layer_values,
                           const EnsembleLookup& lookup, const LinearProbeConfig& cfg,
                           std::size_t workers) {
  AccuracyGrid grid;
  grid.n_values.assign(n_values.begin(), n_values.end());
  grid.layer_values.assign(layer_values.begin(), layer_values.end());
  grid.cells.assign(n_values.size(), std::vector<std::optional<double>>(layer_values.size()));
  const std::size_t cols = layer_values.size();
  parallel_for(n_values.size() * cols, workers, [&](std::size_t cell) {
    const auto n = n_values[cell / cols];
    const auto layer = layer_values[cell % cols];
    auto a = lookup(book_a, n, layer, 0);
    auto b = lookup(book_b, n, layer, 0);
    if (!a || !b) return;
    grid.cells[cell / cols][cell % cols] = train_linear_probe(*a, *b, cfg).report.accuracy;
  });
  return grid;
}

ShuffleGrid shuffle_grid(std::span<const ShuffleVariant> a_variants,
                         std::span<const ShuffleVariant> b_variants, const LinearProbeConfig& cfg,
                         std::size_t workers) {
  ShuffleGrid grid;
  for (const auto& v : a_variants) grid.a_blocks.push_back(v.block);
  for (const auto& v : b_variants) grid.b_blocks.push_back(v.block);
  grid.cells.assign(a_variants.size(), std::vector<double>(b_variants.size(), 0.0));
  const std::size_t cols = b_variants.size();
  if (!a_variants.empty() && !b_variants.empty()) {
    const auto& ref = a_variants.front().ensemble->meta;
    for (auto variants : {a_variants, b_variants}) {
      for (const auto& v : variants) {
        const auto& m = v.ensemble->meta;
        if (m.n != ref.n || m.layer != ref.layer || m.hidden_dim != ref.hidden_dim) {
          fail(ErrorCode::IncompatibleEnsembles, "shuffle variants must share N, L and hidden_dim");
        }
      }
    }
  }
  parallel_for(a_variants.size() * cols, workers, [&](std::size_t cell) {
    const auto& a = *a_variants[cell / cols].ensemble;
    const auto& b = *b_variants[cell % cols].ensemble;
    grid.cells[cell / cols][cell % cols] = train_linear_probe(a, b, cfg).report.accuracy;
  });
  return grid;
}

// --- serialization ------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const ProbeReport& r) {
  return {{"classes", r.classes},
          {"accuracy", r.accuracy},
          {"raw_accuracy", r.raw_accuracy},
          {"confusion", r.confusion},
          {"per_class_accuracy", r.per_class_accuracy},
          {"class_counts", r.class_counts},
          {"train_meta",
           {{"seed", r.train_meta.seed},
            {"epochs", r.train_meta.epochs},
            {"final_loss", r.train_meta.final_loss},
            {"converged", r.train_meta.converged}}},
          {"warnings", r.warnings}};
}

nlohmann::json to_json(const LinearProbe& p) {
  nlohmann::json components = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.pca.components.rows(); ++r) {
    components.push_back(vec_json(p.pca.components.row(r).transpose()));
  }
  return {{"schema", "styloscope.linear_probe"},
          {"version", 1},
          {"classes", {p.classes.first, p.classes.second}},
          {"pca",
           {{"mean", vec_json(p.pca.mean)},
            {"components", components},
            {"explained_variance", vec_json(p.pca.explained_variance)},
            {"total_variance", p.pca.total_variance}}},
          {"w", vec_json(p.w)},
          {"b", p.b}};
}

LinearProbe linear_probe_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "styloscope.linear_probe" ||
        j.at("version").get<int>() != 1) {
      fail(ErrorCode::Format, "unsupported linear probe schema");
    }
    LinearProbe p;
    const auto classes = j.at("classes").get<std::vector<std::string>>();
    if (classes.size() != 2) fail(ErrorCode::Format, "linear probe needs two classes");
    p.classes = {classes[0], classes[1]};
    const auto& pca = j.at("pca");
    p.pca.mean = vec_from(pca.at("mean"));
    const auto& comps = pca.at("components");
    p.pca.components.resize(static_cast<Eigen::Index>(comps.size()), p.pca.mean.size());
    for (std::size_t r = 0; r < comps.size(); ++r) {
      const auto row = vec_from(comps[r]);
      if (row.size() != p.pca.mean.size()) fail(ErrorCode::Format, "ragged PCA component");
      p.pca.components.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    p.pca.explained_variance = vec_from(pca.at("explained_variance"));
    p.pca.total_variance = pca.at("total_variance").get<double>();
    p.w = vec_from(j.at("w"));
    p.b = j.at("b").get<double>();
    if (static_cast<std::size_t>(p.w.size()) != p.pca.k()) fail(ErrorCode::Format, "w length != k");
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("linear probe JSON: ") + e.what());
  }
}

}  // namespace styloscope
