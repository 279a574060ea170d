#include "styloscope/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "styloscope/corpus.hpp"
#include "styloscope/extraction.hpp"
#include "styloscope/geometry.hpp"
#include "styloscope/probes.hpp"
#include "styloscope/report.hpp"
#include "styloscope/store.hpp"

namespace styloscope {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kTokensDir = "tokens";
constexpr const char* kEnsembleDir = "ensembles";
constexpr const char* kArtifactDir = "artifacts";

class Context {
 public:
  Context(const RunConfig& config, std::shared_ptr<Backend> backend)
      : cfg(config), backend_(std::move(backend)) {
    books = read_corpus_manifest(cfg.corpus);
    for (const auto& b : books) by_id.emplace(b.book_id, &b);
  }

  const RunConfig& cfg;
  std::vector<ManifestEntry> books;
  std::map<std::string, const ManifestEntry*> by_id;

  fs::path out(const fs::path& rel) const { return cfg.output_dir / rel; }

  EmbeddingClient& client() {
    if (!client_) {
      if (!backend_) backend_ = make_backend(cfg.backend);
      client_ = std::make_unique<EmbeddingClient>(backend_, cfg.backend, cfg.retry);
    }
    return *client_;
  }

  const ManifestEntry& book(const std::string& id, const std::string& field) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCode::Config, field + ": unknown book '" + id + "'");
    return *it->second;
  }

  std::vector<std::string> books_or_all(const std::vector<std::string>& list, const std::string& field) const {
    if (list.empty()) {
      std::vector<std::string> all;
      for (const auto& b : books) all.push_back(b.book_id);
      return all;
    }
    for (const auto& id : list) book(id, field);
    return list;
  }

  EnsembleIndex& index() {
    if (!index_) index_ = EnsembleIndex::load(out(fs::path(kEnsembleDir) / "index.json"));
    return *index_;
  }

  std::optional<Ensemble> find_ensemble(const std::string& book_id, std::uint32_t n, std::uint32_t layer,
                                        std::uint32_t block) {
    const auto* rec = index().find(book_id, n, layer, block);
    if (!rec) return std::nullopt;
    const auto path = out(fs::path(kEnsembleDir) / rec->file);
    if (!fs::exists(path)) return std::nullopt;
    return read_ensemble(path);
  }

  Ensemble require_ensemble(const std::string& book_id, std::uint32_t n, std::uint32_t layer,
                            std::uint32_t block = 0) {
    auto e = find_ensemble(book_id, n, layer, block);
    if (!e) {
      fail(ErrorCode::Dependency, "missing ensemble for book " + book_id + " (N=" + std::to_string(n) +
                                      ", L=" + std::to_string(layer) + ", B=" + std::to_string(block) +
                                      "); run `extract` first");
    }
    return std::move(*e);
  }

  std::map<std::string, std::string> author_map() const {
    std::map<std::string, std::string> m;
    for (const auto& b : books) m[b.book_id] = b.author_id;
    return m;
  }

  std::vector<std::string> provenance() const { return {cfg.config_hash, std::to_string(cfg.seed)}; }

  CsvTable table(std::vector<std::string> header) const {
    header.push_back("config_hash");
    header.push_back("seed");
    return CsvTable(std::move(header));
  }

  void add(CsvTable& t, std::vector<std::string> row) const {
    const auto p = provenance();
    row.insert(row.end(), p.begin(), p.end());
    t.add_row(std::move(row));
  }

  json stamp(json j) const {
    j["config_hash"] = cfg.config_hash;
    j["seed"] = cfg.seed;
    return j;
  }

  std::string emit(CommandResult& result, const std::string& name, const std::string& text) const {
    const auto rel = (fs::path(kArtifactDir) / name).generic_string();
    write_text(out(rel), text);
    result.artifacts.push_back(rel);
    return rel;
  }

 private:
  std::shared_ptr<Backend> backend_;
  std::unique_ptr<EmbeddingClient> client_;
  std::optional<EnsembleIndex> index_;
};

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

fs::path token_cache(const std::string& book_id) {
  return fs::path(kTokensDir) / (book_id + ".json");
}

// --- ingest / extract --------------------------------------------------------------

CommandResult run_ingest(Context& ctx) {
  CommandResult result;
  for (const auto& entry : ctx.books) {
    const auto rel = token_cache(entry.book_id);
    bool markers = false;
    const RawDocument doc = load_document(entry, &markers);
    if (!markers) spdlog::warn("{}: no Gutenberg markers found; using the whole file", entry.book_id);
    const std::string source_hash = sha256_hex(doc.text);

    if (fs::exists(ctx.out(rel))) {
      const auto cached = json::parse(read_text(ctx.out(rel)));
      if (cached.value("model_id", "") == ctx.cfg.backend.model_id &&
          cached.value("source_sha256", "") == source_hash) {
        spdlog::info("{}: token cache is current", entry.book_id);
        result.artifacts.push_back(rel.generic_string());
        continue;
      }
    }
    const auto ids = ctx.client().tokenize_text(doc.text);
    std::string id_bytes(reinterpret_cast<const char*>(ids.data()), ids.size() * sizeof(TokenId));
    const json j = {{"book_id", entry.book_id},
                    {"author_id", entry.author_id},
                    {"language", entry.language},
                    {"model_id", ctx.cfg.backend.model_id},
                    {"source_sha256", source_hash},
                    {"markers_found", markers},
                    {"tokenizer_hash", sha256_hex(ctx.cfg.backend.model_id + '\0' + id_bytes)},
                    {"token_count", ids.size()},
                    {"token_ids", ids}};
    write_text(ctx.out(rel), j.dump() + "\n");
    spdlog::info("{}: {} tokens", entry.book_id, ids.size());
    result.artifacts.push_back(rel.generic_string());
  }
  return result;
}

std::string ensemble_file(const std::string& book, std::uint32_t n, std::uint32_t layer, std::uint32_t b) {
  return book + "_n" + std::to_string(n) + "_l" + std::to_string(layer) + "_b" + std::to_string(b) + ".ens1";
}

CommandResult run_extract(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  auto& index = ctx.index();
  fs::create_directories(ctx.out(kEnsembleDir));

  std::set<std::string> shuffled_books{cfg.shuffle.pair.first, cfg.shuffle.pair.second};
  const std::uint32_t shuffle_n = cfg.shuffle.n.value_or(cfg.largest_n());

  for (const auto& entry : ctx.books) {
    const auto cache = ctx.out(token_cache(entry.book_id));
    if (!fs::exists(cache)) {
      fail(ErrorCode::Dependency, "no token cache for " + entry.book_id + "; run `ingest` first");
    }
    const auto tokens = json::parse(read_text(cache));
    if (tokens.value("model_id", "") != cfg.backend.model_id) {
      fail(ErrorCode::Dependency, "token cache for " + entry.book_id + " was built for another model; run `ingest`");
    }
    const auto ids = tokens.at("token_ids").get<std::vector<TokenId>>();
    const auto tokenizer_hash = tokens.at("tokenizer_hash").get<std::string>();

    for (std::uint32_t n : cfg.n_values) {
      std::vector<std::uint32_t> blocks{0};
      if (shuffled_books.count(entry.book_id) && n == shuffle_n) {
        for (auto b : cfg.shuffle.blocks) {
          if (b == 0 || n % b != 0) {
            fail(ErrorCode::InvalidBlockSize, "shuffle.blocks: " + std::to_string(b) + " does not divide N=" +
                                                  std::to_string(n));
          }
          blocks.push_back(b);
        }
      }
      for (std::uint32_t block : blocks) {
        auto key_of = [&](std::uint32_t layer) {
          return sha256_hex(cfg.backend.model_id + '|' + entry.book_id + '|' + std::to_string(n) + '|' +
                            std::to_string(layer) + '|' + std::to_string(block) + '|' + tokenizer_hash + '|' +
                            cfg.backend.hidden_state_view + '|' + std::to_string(cfg.max_chunks_per_book) + '|' +
                            std::to_string(block ? cfg.shuffle_seed : 0));
        };
        const bool cached = std::all_of(cfg.layers.begin(), cfg.layers.end(), [&](std::uint32_t layer) {
          const auto* rec = index.find(entry.book_id, n, layer, block);
          return rec && rec->cache_key == key_of(layer) && fs::exists(ctx.out(fs::path(kEnsembleDir) / rec->file));
        });
        if (cached) {
          spdlog::info("{} N={} B={}: cached", entry.book_id, n, block);
          continue;
        }

        auto chunks = chunk_tokens(ids, n, entry.book_id);
        if (cfg.max_chunks_per_book && chunks.size() > cfg.max_chunks_per_book) {
          chunks.resize(cfg.max_chunks_per_book);
        }
        if (chunks.empty()) {
          spdlog::warn("{}: too short for N={}", entry.book_id, n);
          continue;
        }
        if (block) {
          for (auto& c : chunks) c = block_shuffle(c, block, cfg.shuffle_seed);
        }
        const auto batch = ctx.client().extract_all(chunks, cfg.layers);
        EnsembleMeta meta;
        meta.book_id = entry.book_id;
        meta.author_id = entry.author_id;
        meta.language = entry.language;
        meta.model_id = cfg.backend.model_id;
        meta.n = n;
        meta.shuffle_block = block;
        auto ensembles = assemble_ensembles(batch, cfg.layers, meta);
        for (auto& [layer, e] : ensembles) {
          const auto file = ensemble_file(entry.book_id, n, layer, block);
          write_ensemble(e, ctx.out(fs::path(kEnsembleDir) / file));
          index.upsert({entry.book_id, n, layer, block, file, key_of(layer)});
          result.artifacts.push_back((fs::path(kEnsembleDir) / file).generic_string());
        }
        spdlog::info("{} N={} B={}: {} chunks, {} excluded", entry.book_id, n, block, chunks.size(),
                     batch.failures.size());
      }
    }
  }
  index.save(ctx.out(fs::path(kEnsembleDir) / "index.json"));
  result.artifacts.push_back((fs::path(kEnsembleDir) / "index.json").generic_string());
  return result;
}

// --- analyses ---------------------------------------------------------------------

CommandResult run_grid(Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.grid.pairs.empty()) fail(ErrorCode::Config, "grid.pairs: at least one pair is required");
  CommandResult result;
  if (ctx.index().records().empty()) fail(ErrorCode::Dependency, "no ensembles found; run `extract` first");
  const EnsembleLookup lookup = [&ctx](const std::string& book, std::uint32_t n, std::uint32_t layer,
                                       std::uint32_t block) { return ctx.find_ensemble(book, n, layer, block); };
  for (std::size_t p = 0; p < cfg.grid.pairs.size(); ++p) {
    const auto& [a, b] = cfg.grid.pairs[p];
    ctx.book(a, "grid.pairs[" + std::to_string(p) + "]");
    ctx.book(b, "grid.pairs[" + std::to_string(p) + "]");
    const auto grid = accuracy_grid(a, b, cfg.n_values, cfg.layers, lookup, cfg.probe, cfg.workers);
    auto t = ctx.table({"book_a", "book_b", "n", "layer", "accuracy"});
    for (std::size_t i = 0; i < grid.n_values.size(); ++i) {
      for (std::size_t j = 0; j < grid.layer_values.size(); ++j) {
        if (!grid.cells[i][j]) spdlog::warn("grid {}/{}: no ensemble at N={} L={}", a, b, grid.n_values[i], grid.layer_values[j]);
        ctx.add(t, {a, b, std::to_string(grid.n_values[i]), std::to_string(grid.layer_values[j]),
                    cell(grid.cells[i][j])});
      }
    }
    ctx.emit(result, "grid_" + a + "_" + b + ".csv", t.str());
  }
  return result;
}

CommandResult run_multiclass(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto books = ctx.books_or_all(cfg.multiclass.books, "multiclass.books");
  const auto n = cfg.multiclass.n.value_or(cfg.largest_n());
  const auto layer = cfg.multiclass.layer.value_or(cfg.deepest_layer());
  std::vector<Ensemble> ensembles;
  for (const auto& id : books) ensembles.push_back(ctx.require_ensemble(id, n, layer));
  std::vector<LabeledEnsemble> labeled;
  for (std::size_t i = 0; i < books.size(); ++i) labeled.push_back({books[i], &ensembles[i]});

  const auto fit = train_mlp_probe(labeled, cfg.mlp);
  std::vector<std::string> header{"true_label"};
  header.insert(header.end(), books.begin(), books.end());
  auto t = ctx.table(header);
  for (std::size_t i = 0; i < books.size(); ++i) {
    std::vector<std::string> row{books[i]};
    for (double v : fit.report.confusion[i]) row.push_back(format_number(v));
    ctx.add(t, row);
  }
  ctx.emit(result, "multiclass_confusion.csv", t.str());

  json summary = {{"n", n}, {"layer", layer}, {"accuracy", fit.report.accuracy},
                  {"raw_accuracy", fit.report.raw_accuracy}, {"best_val_loss", fit.best_val_loss},
                  {"layer_sizes", fit.probe.layer_sizes()}};
  try {
    const auto ie = intra_extra_confusion(fit.report, ctx.author_map());
    summary["intra"] = ie.intra;
    summary["extra"] = ie.extra;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::IntraUndefined) throw;
    summary["intra"] = nullptr;
    summary["extra"] = nullptr;
    summary["note"] = e.what();
  }
  ctx.emit(result, "multiclass_intra_extra.json", ctx.stamp(summary).dump(2) + "\n");
  ctx.emit(result, "multiclass_report.json", ctx.stamp(to_json(fit.report)).dump(2) + "\n");

  if (cfg.multiclass.export_activations) {
    std::vector<std::string> act_header{"book_id", "row"};
    const auto width = fit.probe.layer_sizes()[fit.probe.layer_sizes().size() - 2];
    for (std::size_t c = 0; c < width; ++c) act_header.push_back("a" + std::to_string(c));
    auto at = ctx.table(act_header);
    for (std::size_t i = 0; i < books.size(); ++i) {
      const Eigen::MatrixXf acts = penultimate_activations(fit.probe, ensembles[i]);
      for (Eigen::Index r = 0; r < acts.rows(); ++r) {
        std::vector<std::string> row{books[i], std::to_string(r)};
        for (Eigen::Index c = 0; c < acts.cols(); ++c) row.push_back(format_number(acts(r, c)));
        ctx.add(at, row);
      }
    }
    ctx.emit(result, "penultimate_activations.csv", at.str());
  }
  return result;
}

CommandResult run_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto& [a_id, b_id] = cfg.sweep.pair;
  ctx.book(a_id, "sweep.pair");
  ctx.book(b_id, "sweep.pair");
  const auto n = cfg.sweep.n.value_or(cfg.largest_n());
  const auto layer = cfg.sweep.layer.value_or(cfg.deepest_layer());
  const auto a = ctx.require_ensemble(a_id, n, layer);
  const auto b = ctx.require_ensemble(b_id, n, layer);

  const auto train_rows = split_train_val(a, cfg.probe.ratio, cfg.seed).train.size() +
                          split_train_val(b, cfg.probe.ratio, cfg.seed).train.size();
  const std::size_t available = std::min<std::size_t>(train_rows - 1, a.dim());
  auto t = ctx.table({"k_start", "n_dims", "accuracy"});
  for (auto k : cfg.sweep.k_values) {
    std::vector<std::size_t> dims;
    for (auto d : cfg.sweep.dims) {
      if (k + d - 1 <= available) {
        dims.push_back(d);
      } else {
        spdlog::warn("sweep: skipping k={} n={} (only {} components)", k, d, available);
      }
    }
    if (dims.empty()) continue;
    const std::size_t ks[] = {k};
    for (const auto& s : subspace_probe_sweep(a, b, ks, dims, cfg.probe, cfg.workers)) {
      ctx.add(t, {std::to_string(s.k_start), std::to_string(s.n_dims), format_number(s.accuracy)});
    }
  }
  ctx.emit(result, "sweep_" + a_id + "_" + b_id + ".csv", t.str());

  const auto full = train_linear_probe(a, b, cfg.probe);
  json summary = {{"book_a", a_id}, {"book_b", b_id}, {"n", n}, {"layer", layer},
                  {"reference_accuracy", full.report.accuracy}, {"reference_pca_k", full.probe.pca.k()}};
  ctx.emit(result, "sweep_" + a_id + "_" + b_id + ".json", ctx.stamp(summary).dump(2) + "\n");
  return result;
}

CommandResult run_id(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto books = ctx.books_or_all(cfg.id.books, "id.books");
  if (ctx.index().records().empty()) fail(ErrorCode::Dependency, "no ensembles found; run `extract` first");
  auto t = ctx.table({"book_id", "n", "layer", "id_hat", "sample_count", "discarded_fraction", "status"});
  for (const auto& book : books) {
    for (auto n : cfg.n_values) {
      for (auto layer : cfg.layers) {
        auto e = ctx.find_ensemble(book, n, layer, 0);
        if (!e) {
          ctx.add(t, {book, std::to_string(n), std::to_string(layer), "", "", "", "missing"});
          continue;
        }
        try {
          const auto est = twonn_id(e->rows.cast<double>(), cfg.id.discard, cfg.workers);
          ctx.add(t, {book, std::to_string(n), std::to_string(layer), format_number(est.id_hat),
                      std::to_string(est.sample_count), format_number(est.discarded_fraction), "ok"});
        } catch (const Error& err) {
          if (err.code() != ErrorCode::InsufficientData && err.code() != ErrorCode::DegenerateGeometry) throw;
          ctx.add(t, {book, std::to_string(n), std::to_string(layer), "", std::to_string(e->count()), "",
                      std::string(to_string(err.code()))});
        }
      }
    }
  }
  ctx.emit(result, "intrinsic_dimension.csv", t.str());
  return result;
}

CommandResult run_shuffle_grid(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto& [a_id, b_id] = cfg.shuffle.pair;
  ctx.book(a_id, "shuffle.pair");
  ctx.book(b_id, "shuffle.pair");
  const auto n = cfg.shuffle.n.value_or(cfg.largest_n());
  const auto layer = cfg.shuffle.layer.value_or(cfg.deepest_layer());
  std::vector<Ensemble> a_store, b_store;
  for (auto bl : cfg.shuffle.blocks) {
    a_store.push_back(ctx.require_ensemble(a_id, n, layer, bl));
    b_store.push_back(ctx.require_ensemble(b_id, n, layer, bl));
  }
  std::vector<ShuffleVariant> av, bv;
  for (std::size_t i = 0; i < cfg.shuffle.blocks.size(); ++i) {
    av.push_back({cfg.shuffle.blocks[i], &a_store[i]});
    bv.push_back({cfg.shuffle.blocks[i], &b_store[i]});
  }
  const auto grid = shuffle_grid(av, bv, cfg.probe, cfg.workers);
  auto t = ctx.table({"book_a", "block_a", "book_b", "block_b", "accuracy"});
  for (std::size_t i = 0; i < grid.a_blocks.size(); ++i) {
    for (std::size_t j = 0; j < grid.b_blocks.size(); ++j) {
      ctx.add(t, {a_id, std::to_string(grid.a_blocks[i]), b_id, std::to_string(grid.b_blocks[j]),
                  format_number(grid.cells[i][j])});
    }
  }
  ctx.emit(result, "shuffle_grid_" + a_id + "_" + b_id + ".csv", t.str());
  return result;
}

CommandResult run_transfer(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& tr = cfg.transfer;
  CommandResult result;
  if (tr.rows.empty() || tr.columns.empty()) fail(ErrorCode::Config, "transfer.rows and transfer.columns are required");
  const auto n = tr.n.value_or(cfg.largest_n());
  const auto layer = tr.layer.value_or(cfg.deepest_layer());
  ctx.book(tr.reference.first, "transfer.reference");
  ctx.book(tr.reference.second, "transfer.reference");

  std::map<std::string, Ensemble> cache;
  auto get = [&](const std::string& id) -> const Ensemble& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      ctx.book(id, "transfer.columns");
      it = cache.emplace(id, ctx.require_ensemble(id, n, layer)).first;
    }
    return it->second;
  };

  const auto fit = train_linear_probe(get(tr.reference.first), get(tr.reference.second), cfg.probe);
  std::vector<std::string> header{"row"};
  for (const auto& col : tr.columns) header.push_back(col.label);
  auto t = ctx.table(header);
  for (std::size_t r = 0; r < tr.rows.size(); ++r) {
    std::vector<std::string> row{tr.rows[r]};
    for (const auto& col : tr.columns) {
      const auto& pair = col.by_row[r].second;
      // The reference pair itself is scored on its held-out rows only.
      const double acc = pair == tr.reference ? fit.report.accuracy
                                              : evaluate_probe(fit.probe, get(pair.first), get(pair.second));
      row.push_back(format_number(acc));
    }
    ctx.add(t, row);
  }
  ctx.emit(result, "transfer.csv", t.str());
  ctx.emit(result, "transfer_probe.json", ctx.stamp(to_json(fit.probe)).dump() + "\n");

  // Separation-vector cosines between the first row and every other row, per column.
  std::vector<LabeledEnsemble> labeled;
  for (const auto& col : tr.columns) {
    for (const auto& [row, pair] : col.by_row) {
      get(pair.first);
      get(pair.second);
    }
  }
  for (const auto& [id, e] : cache) labeled.push_back({id, &e});
  const auto cents = centroids(labeled);
  auto s = ctx.table({"column", "row_a", "row_b", "separation_cosine_distance"});
  for (const auto& col : tr.columns) {
    for (std::size_t r = 1; r < col.by_row.size(); ++r) {
      ctx.add(s, {col.label, col.by_row[0].first, col.by_row[r].first,
                  format_number(separation_cosine(cents, col.by_row[0].second, col.by_row[r].second))});
    }
  }
  ctx.emit(result, "separation_cosines.csv", s.str());

  if (tr.centroid_variant) {
    auto v = ctx.table({"column", "row_a", "row_b", "book_a", "book_b", "centroid_cosine_distance"});
    for (const auto& col : tr.columns) {
      for (std::size_t r = 1; r < col.by_row.size(); ++r) {
        const auto& p0 = col.by_row[0].second;
        const auto& pr = col.by_row[r].second;
        for (const auto& [x, y] : {std::pair{p0.first, pr.first}, std::pair{p0.second, pr.second}}) {
          ctx.add(v, {col.label, col.by_row[0].first, col.by_row[r].first, x, y,
                      format_number(centroid_cosine_distance(cents, x, y))});
        }
      }
    }
    ctx.emit(result, "centroid_cosines.csv", v.str());
  }
  return result;
}

CommandResult run_map(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto books = ctx.books_or_all(cfg.map.books, "map.books");
  const auto n = cfg.map.n.value_or(cfg.largest_n());
  const auto layer = cfg.map.layer.value_or(cfg.deepest_layer());
  std::vector<Ensemble> ensembles;
  for (const auto& id : books) ensembles.push_back(ctx.require_ensemble(id, n, layer));
  std::vector<LabeledEnsemble> labeled;
  for (std::size_t i = 0; i < books.size(); ++i) labeled.push_back({books[i], &ensembles[i]});

  const auto cents = centroids(labeled);
  const Eigen::MatrixXd dist = cosine_distance_matrix(cents);
  const auto map = mds_embed(dist, cfg.seed, books);

  auto t = ctx.table({"book_id", "author_id", "x", "y", "stress"});
  std::vector<SvgPoint> points;
  for (std::size_t i = 0; i < books.size(); ++i) {
    const auto& coords = map.coords;
    ctx.add(t, {books[i], ctx.book(books[i], "map.books").author_id,
                format_number(coords(static_cast<Eigen::Index>(i), 0)),
                format_number(coords(static_cast<Eigen::Index>(i), 1)), format_number(map.stress)});
    points.push_back({coords(static_cast<Eigen::Index>(i), 0), coords(static_cast<Eigen::Index>(i), 1), books[i]});
  }
  ctx.emit(result, "map.csv", t.str());

  std::vector<std::string> header{"book_id"};
  header.insert(header.end(), books.begin(), books.end());
  auto d = ctx.table(header);
  for (std::size_t i = 0; i < books.size(); ++i) {
    std::vector<std::string> row{books[i]};
    for (std::size_t j = 0; j < books.size(); ++j) {
      row.push_back(format_number(dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    ctx.add(d, row);
  }
  ctx.emit(result, "map_distances.csv", d.str());

  const std::string meta = "config_hash=" + cfg.config_hash + " seed=" + std::to_string(cfg.seed) +
                           " n=" + std::to_string(n) + " layer=" + std::to_string(layer) +
                           " stress=" + format_number(map.stress);
  ctx.emit(result, "map.svg", scatter_svg(points, "Centroid cosine-distance map", meta));
  return result;
}

CommandResult run_report(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CommandResult result;
  const auto dir = ctx.out(kArtifactDir);
  if (!fs::exists(dir)) fail(ErrorCode::Dependency, "no artifacts found; run an analysis command first");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const auto& f : files) {
    artifacts.push_back({{"path", (fs::path(kArtifactDir) / f).generic_string()},
                         {"sha256", sha256_file(dir / f)}});
  }
  json ensembles = json::array();
  for (const auto& r : ctx.index().records()) {
    ensembles.push_back({{"book_id", r.book_id}, {"n", r.n}, {"layer", r.layer},
                         {"shuffle_block", r.shuffle_block}, {"file", r.file}, {"cache_key", r.cache_key}});
  }
  const json manifest = {{"config_hash", cfg.config_hash},
                         {"seeds", {{"seed", cfg.seed}, {"shuffle_seed", cfg.shuffle_seed}}},
                         {"config", cfg.source},
                         {"backend", {{"model_id", cfg.backend.model_id},
                                      {"hidden_state_view", cfg.backend.hidden_state_view}}},
                         {"artifacts", artifacts},
                         {"ensembles", ensembles}};
  write_json(ctx.out("run_manifest.json"), manifest);
  result.artifacts.push_back("run_manifest.json");
  return result;
}

}  // namespace

CommandResult run_command(std::string_view command, const RunConfig& config, std::shared_ptr<Backend> backend) {
  Context ctx(config, std::move(backend));
  fs::create_directories(config.output_dir);
  if (command == "ingest") return run_ingest(ctx);
  if (command == "extract") return run_extract(ctx);
  if (command == "grid") return run_grid(ctx);
  if (command == "multiclass") return run_multiclass(ctx);
  if (command == "sweep") return run_sweep(ctx);
  if (command == "id") return run_id(ctx);
  if (command == "shuffle-grid") return run_shuffle_grid(ctx);
  if (command == "transfer") return run_transfer(ctx);
  if (command == "map") return run_map(ctx);
  if (command == "report") return run_report(ctx);
  fail(ErrorCode::Config, "unknown command '" + std::string(command) + "'");
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Dependency:
    case ErrorCode::Transport:
    case ErrorCode::Request:
    case ErrorCode::ProtocolViolation:
    case ErrorCode::DataQuality:
    case ErrorCode::Format:
    case ErrorCode::Corruption:
      return 2;
    default:
      return 1;
  }
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "malformed-document";
    case ErrorCode::InvalidBlockSize: return "invalid-block-size";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::Request: return "request";
    case ErrorCode::ProtocolViolation: return "protocol-violation";
    case ErrorCode::DataQuality: return "data-quality";
    case ErrorCode::Format: return "format";
    case ErrorCode::Corruption: return "corruption";
    case ErrorCode::DegenerateSplit: return "degenerate-split";
    case ErrorCode::InvalidK: return "invalid-k";
    case ErrorCode::DegenerateData: return "degenerate-data";
    case ErrorCode::IncompatibleEnsembles: return "incompatible-ensembles";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::IntraUndefined: return "intra-undefined";
    case ErrorCode::DegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::InvalidRange: return "invalid-range";
    case ErrorCode::InvalidMatrix: return "invalid-matrix";
    case ErrorCode::Dependency: return "dependency";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace styloscope
