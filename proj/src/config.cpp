#include "styloscope/config.hpp"

#include <algorithm>
#include <fstream>

#include "styloscope/errors.hpp"
#include "styloscope/report.hpp"

namespace styloscope {
namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  fail(ErrorCode::Config, field + ": " + what);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    field_error(prefix + key, e.what());
  }
}

BookPair read_pair(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_string()) {
    field_error(field, "expected [\"book_a\", \"book_b\"]");
  }
  return {j[0].get<std::string>(), j[1].get<std::string>()};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_relative() ? base / p : p;
}

void read(const json& j, const char* key, std::optional<std::uint32_t>& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  std::uint32_t v = 0;
  read(j, key, v, prefix);
  out = v;
}

}  // namespace

std::uint32_t RunConfig::deepest_layer() const {
  return layers.empty() ? 0 : *std::max_element(layers.begin(), layers.end());
}

std::uint32_t RunConfig::largest_n() const {
  return n_values.empty() ? 0 : *std::max_element(n_values.begin(), n_values.end());
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) field_error("<root>", "config must be a JSON object");
  RunConfig c;
  int version = 0;
  read(j, "schema_version", version, "");
  if (version != kConfigSchemaVersion) {
    field_error("schema_version", "expected " + std::to_string(kConfigSchemaVersion));
  }

  std::string corpus;
  read(j, "corpus", corpus, "");
  if (corpus.empty()) field_error("corpus", "required");
  c.corpus = resolve(base_dir, corpus);

  if (!j.contains("backend") || !j["backend"].is_object()) field_error("backend", "required object");
  const auto& b = j["backend"];
  read(b, "endpoint", c.backend.endpoint, "backend.");
  read(b, "model_id", c.backend.model_id, "backend.");
  read(b, "layer_count", c.backend.layer_count, "backend.");
  read(b, "hidden_dim", c.backend.hidden_dim, "backend.");
  read(b, "max_in_flight", c.backend.max_in_flight, "backend.");
  read(b, "hidden_state_view", c.backend.hidden_state_view, "backend.");
  std::int64_t timeout_ms = c.backend.timeout.count();
  read(b, "timeout_ms", timeout_ms, "backend.");
  if (timeout_ms <= 0) field_error("backend.timeout_ms", "must be positive");
  c.backend.timeout = std::chrono::milliseconds(timeout_ms);
  std::int64_t retry_ms = c.retry.base_delay.count();
  read(b, "retry_base_ms", retry_ms, "backend.");
  read(b, "max_retries", c.retry.max_retries, "backend.");
  c.retry.base_delay = std::chrono::milliseconds(std::max<std::int64_t>(0, retry_ms));
  try {
    c.backend.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }

  read(j, "n_values", c.n_values, "");
  if (c.n_values.empty()) field_error("n_values", "must not be empty");
  for (auto n : c.n_values) {
    if (n == 0) field_error("n_values", "entries must be positive");
  }
  read(j, "layers", c.layers, "");
  if (c.layers.empty()) {
    for (std::uint32_t l = 0; l <= c.backend.layer_count; ++l) c.layers.push_back(l);
  }
  std::sort(c.layers.begin(), c.layers.end());
  c.layers.erase(std::unique(c.layers.begin(), c.layers.end()), c.layers.end());
  if (c.layers.back() > c.backend.layer_count) {
    field_error("layers", "layer " + std::to_string(c.layers.back()) + " exceeds backend.layer_count");
  }

  read(j, "seed", c.seed, "");
  c.shuffle_seed = c.seed;
  read(j, "shuffle_seed", c.shuffle_seed, "");
  std::string out = "out";
  read(j, "output_dir", out, "");
  c.output_dir = resolve(base_dir, out);
  read(j, "max_chunks_per_book", c.max_chunks_per_book, "");
  read(j, "workers", c.workers, "");
  if (c.workers == 0) field_error("workers", "must be >= 1");

  c.probe.seed = c.seed;
  c.mlp.seed = c.seed;
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    read(p, "ratio", c.probe.ratio, "probe.");
    read(p, "pca_k", c.probe.pca_k, "probe.");
    read(p, "reg_c", c.probe.reg_c, "probe.");
    read(p, "tolerance", c.probe.tolerance, "probe.");
    read(p, "max_epochs", c.probe.max_epochs, "probe.");
  }
  if (!(c.probe.ratio > 0.0 && c.probe.ratio < 1.0)) field_error("probe.ratio", "must lie in (0, 1)");
  if (c.probe.reg_c <= 0.0) field_error("probe.reg_c", "must be positive");
  c.mlp.ratio = c.probe.ratio;
  if (j.contains("mlp")) {
    const auto& m = j["mlp"];
    read(m, "epochs", c.mlp.epochs, "mlp.");
    read(m, "batch", c.mlp.batch, "mlp.");
    read(m, "lr", c.mlp.lr, "mlp.");
    read(m, "patience", c.mlp.patience, "mlp.");
    read(m, "hidden", c.mlp.hidden, "mlp.");
  }
  if (c.mlp.batch == 0) field_error("mlp.batch", "must be >= 1");
  if (c.mlp.hidden.empty()) field_error("mlp.hidden", "must not be empty");

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (g.contains("pairs")) {
      if (!g["pairs"].is_array()) field_error("grid.pairs", "expected an array");
      for (std::size_t i = 0; i < g["pairs"].size(); ++i) {
        c.grid.pairs.push_back(read_pair(g["pairs"][i], "grid.pairs[" + std::to_string(i) + "]"));
      }
    }
  }
  if (j.contains("multiclass")) {
    const auto& m = j["multiclass"];
    read(m, "books", c.multiclass.books, "multiclass.");
    read(m, "n", c.multiclass.n, "multiclass.");
    read(m, "layer", c.multiclass.layer, "multiclass.");
    read(m, "export_activations", c.multiclass.export_activations, "multiclass.");
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (s.contains("pair")) c.sweep.pair = read_pair(s["pair"], "sweep.pair");
    read(s, "n", c.sweep.n, "sweep.");
    read(s, "layer", c.sweep.layer, "sweep.");
    read(s, "k_values", c.sweep.k_values, "sweep.");
    read(s, "dims", c.sweep.dims, "sweep.");
  }
  if (j.contains("id")) {
    read(j["id"], "books", c.id.books, "id.");
    read(j["id"], "discard", c.id.discard, "id.");
    if (!(c.id.discard >= 0.0 && c.id.discard < 1.0)) field_error("id.discard", "must lie in [0, 1)");
  }
  if (j.contains("shuffle")) {
    const auto& s = j["shuffle"];
    if (s.contains("pair")) c.shuffle.pair = read_pair(s["pair"], "shuffle.pair");
    read(s, "n", c.shuffle.n, "shuffle.");
    read(s, "layer", c.shuffle.layer, "shuffle.");
    read(s, "blocks", c.shuffle.blocks, "shuffle.");
  }
  if (j.contains("transfer")) {
    const auto& t = j["transfer"];
    if (t.contains("reference")) c.transfer.reference = read_pair(t["reference"], "transfer.reference");
    read(t, "rows", c.transfer.rows, "transfer.");
    read(t, "n", c.transfer.n, "transfer.");
    read(t, "layer", c.transfer.layer, "transfer.");
    read(t, "centroid_variant", c.transfer.centroid_variant, "transfer.");
    if (t.contains("columns")) {
      for (std::size_t i = 0; i < t["columns"].size(); ++i) {
        const auto& col = t["columns"][i];
        const std::string field = "transfer.columns[" + std::to_string(i) + "]";
        TransferColumn tc;
        read(col, "label", tc.label, field + ".");
        if (!col.contains("pairs") || !col["pairs"].is_object()) field_error(field + ".pairs", "required object");
        for (const auto& row : c.transfer.rows) {
          if (!col["pairs"].contains(row)) field_error(field + ".pairs." + row, "missing");
          tc.by_row.emplace_back(row, read_pair(col["pairs"][row], field + ".pairs." + row));
        }
        c.transfer.columns.push_back(std::move(tc));
      }
    }
  }
  if (j.contains("map")) {
    read(j["map"], "books", c.map.books, "map.");
    read(j["map"], "n", c.map.n, "map.");
    read(j["map"], "layer", c.map.layer, "map.");
  }

  c.source = j;
  c.source.erase("output_dir");
  c.config_hash = sha256_hex(c.source.dump());
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "config " + path.string() + ": " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

}  // namespace styloscope
