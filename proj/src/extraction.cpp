#include "styloscope/extraction.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "styloscope/errors.hpp"
#include "styloscope/rng.hpp"

namespace styloscope {

void BackendConfig::validate() const {
  if (layer_count < 1) fail(ErrorCode::Config, "backend.layer_count must be >= 1");
  if (hidden_dim < 1) fail(ErrorCode::Config, "backend.hidden_dim must be >= 1");
  if (max_in_flight < 1) fail(ErrorCode::Config, "backend.max_in_flight must be >= 1");
  if (endpoint.empty()) fail(ErrorCode::Config, "backend.endpoint is required");
  if (model_id.empty()) fail(ErrorCode::Config, "backend.model_id is required");
}

// --- HTTP -------------------------------------------------------------------

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::Config, "backend.endpoint must be a URL: " + config_.endpoint);
  }
  const auto path_begin = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_begin);
  if (path_begin != std::string::npos) {
    prefix_ = config_.endpoint.substr(path_begin);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

std::string HttpBackend::post(const std::string& route, const std::string& body) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  auto res = cli.Post(prefix_ + route, body, "application/json");
  if (!res) {
    fail(ErrorCode::Transport, "POST " + route + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429 || res->status == 408) {
    fail(ErrorCode::Transport, "POST " + route + ": HTTP " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    fail(ErrorCode::Request,
         "POST " + route + ": HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

std::vector<TokenId> HttpBackend::tokenize(const std::string& text) {
  const nlohmann::json req = {{"model", config_.model_id}, {"text", text}};
  const auto body = post("/v1/tokenize", req.dump());
  try {
    return nlohmann::json::parse(body).at("token_ids").get<std::vector<TokenId>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ProtocolViolation, std::string("/v1/tokenize response: ") + e.what());
  }
}

HiddenResponse HttpBackend::hidden(std::span<const TokenId> token_ids,
                                   std::span<const std::uint32_t> layers) {
  const nlohmann::json req = {{"model", config_.model_id},
                              {"token_ids", std::vector<TokenId>(token_ids.begin(), token_ids.end())},
                              {"layers", std::vector<std::uint32_t>(layers.begin(), layers.end())},
                              {"position", "last"}};
  const auto body = post("/v1/hidden", req.dump());
  HiddenResponse out;
  try {
    const auto j = nlohmann::json::parse(body);
    out.dim = j.at("dim").get<std::uint32_t>();
    for (const auto& [key, values] : j.at("hidden").items()) {
      std::vector<float> v;
      v.reserve(values.size());
      for (const auto& x : values) {
        // JSON cannot carry NaN/Inf; servers emit null for them.
        v.push_back(x.is_null() ? std::numeric_limits<float>::quiet_NaN() : x.get<float>());
      }
      out.hidden.emplace(static_cast<std::uint32_t>(std::stoul(key)), std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ProtocolViolation, std::string("/v1/hidden response: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorCode::ProtocolViolation, std::string("/v1/hidden response: bad layer key"));
  }
  return out;
}

// --- synthetic --------------------------------------------------------------

SyntheticBackend::SyntheticBackend(BackendConfig config, double context_gain)
    : config_(std::move(config)),
      context_gain_(context_gain),
      model_key_(fnv1a64(config_.model_id)) {}

std::vector<TokenId> SyntheticBackend::tokenize(const std::string& text) {
  std::vector<TokenId> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    ids.push_back(static_cast<TokenId>(1 + fnv1a64(word) % (kVocabSize - 1)));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (!std::isspace(c)) {
        word.push_back(static_cast<char>(c));
        flush();
      }
    }
  }
  flush();
  return ids;
}

const std::vector<float>& SyntheticBackend::embedding(TokenId token) {
  std::lock_guard lock(mu_);
  auto it = table_.find(token);
  if (it != table_.end()) return it->second;
  KeyedStream stream(model_key_, "embedding", static_cast<std::uint64_t>(token));
  std::vector<float> v(config_.hidden_dim);
  for (auto& x : v) x = static_cast<float>(stream.normal());
  return table_.emplace(token, std::move(v)).first->second;
}

HiddenResponse SyntheticBackend::hidden(std::span<const TokenId> token_ids,
                                        std::span<const std::uint32_t> layers) {
  if (token_ids.empty()) fail(ErrorCode::Request, "empty token sequence");
  const std::size_t d = config_.hidden_dim;
  std::vector<double> context(d, 0.0);
  for (TokenId t : token_ids) {
    const auto& e = embedding(t);
    for (std::size_t i = 0; i < d; ++i) context[i] += e[i];
  }
  for (auto& x : context) x /= static_cast<double>(token_ids.size());
  const auto& last = embedding(token_ids.back());

  HiddenResponse out;
  out.dim = static_cast<std::uint32_t>(d);
  for (std::uint32_t layer : layers) {
    if (layer > config_.layer_count) {
      fail(ErrorCode::Request, "layer " + std::to_string(layer) + " out of range");
    }
    const double w = context_gain_ * std::sqrt(static_cast<double>(token_ids.size())) *
                     static_cast<double>(layer) / static_cast<double>(config_.layer_count);
    std::vector<float> h(d);
    for (std::size_t i = 0; i < d; ++i) {
      h[i] = layer == 0 ? last[i] : static_cast<float>(last[i] + w * context[i]);
    }
    out.hidden.emplace(layer, std::move(h));
  }
  return out;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.endpoint.rfind("synthetic://", 0) == 0) {
    return std::make_shared<SyntheticBackend>(config);
  }
  if (config.endpoint.rfind("http://", 0) == 0 || config.endpoint.rfind("https://", 0) == 0) {
    return std::make_shared<HttpBackend>(config);
  }
  fail(ErrorCode::Config, "unsupported backend endpoint scheme: " + config.endpoint);
}

// --- client -----------------------------------------------------------------

void EmbeddingClient::Gate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return free_ > 0; });
  --free_;
}

void EmbeddingClient::Gate::release() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

EmbeddingClient::EmbeddingClient(std::shared_ptr<Backend> backend, BackendConfig config,
                                 RetryPolicy retry)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      retry_(retry),
      gate_((config_.validate(), config_.max_in_flight)) {}

template <typename F>
auto EmbeddingClient::with_retry(F&& call) -> decltype(call()) {
  auto delay = retry_.base_delay;
  for (int attempt = 0;; ++attempt) {
    gate_.acquire();
    try {
      auto result = call();
      gate_.release();
      return result;
    } catch (const Error& e) {
      gate_.release();
      if (!e.retryable() || attempt >= retry_.max_retries) throw;
      spdlog::debug("retrying after transport error: {}", e.what());
    } catch (...) {
      gate_.release();
      throw;
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

std::vector<TokenId> EmbeddingClient::tokenize_text(const std::string& text) {
  return with_retry([&] { return backend_->tokenize(text); });
}

std::vector<LayerEmbedding> EmbeddingClient::extract_last_token_embeddings(
    const TokenChunk& chunk, std::span<const std::uint32_t> layers) {
  if (chunk.token_ids.size() != chunk.n || chunk.n == 0) {
    fail(ErrorCode::InvalidArgument, "chunk token count does not match n");
  }
  std::vector<std::uint32_t> wanted(layers.begin(), layers.end());
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  if (wanted.empty()) fail(ErrorCode::InvalidArgument, "no layers requested");
  if (wanted.back() > config_.layer_count) {
    fail(ErrorCode::InvalidArgument, "layer " + std::to_string(wanted.back()) +
                                         " exceeds layer_count " +
                                         std::to_string(config_.layer_count));
  }

  auto response = with_retry([&] { return backend_->hidden(chunk.token_ids, wanted); });
  if (response.dim != config_.hidden_dim) {
    fail(ErrorCode::ProtocolViolation, "backend reported dim " + std::to_string(response.dim) +
                                           ", expected " + std::to_string(config_.hidden_dim));
  }
  std::vector<LayerEmbedding> out;
  out.reserve(wanted.size());
  for (std::uint32_t layer : wanted) {
    auto it = response.hidden.find(layer);
    if (it == response.hidden.end()) {
      fail(ErrorCode::ProtocolViolation, "backend omitted layer " + std::to_string(layer));
    }
    if (it->second.size() != config_.hidden_dim) {
      fail(ErrorCode::ProtocolViolation, "layer " + std::to_string(layer) + " has " +
                                             std::to_string(it->second.size()) + " values, expected " +
                                             std::to_string(config_.hidden_dim));
    }
    if (!std::all_of(it->second.begin(), it->second.end(), [](float x) { return std::isfinite(x); })) {
      fail(ErrorCode::DataQuality, "non-finite hidden state at layer " + std::to_string(layer));
    }
    out.push_back({layer, std::move(it->second)});
  }
  return out;
}

ExtractionBatch EmbeddingClient::extract_all(std::span<const TokenChunk> chunks,
                                             std::span<const std::uint32_t> layers) {
  ExtractionBatch batch;
  batch.results.resize(chunks.size());
  std::vector<std::optional<std::string>> errors(chunks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      try {
        batch.results[i] = extract_last_token_embeddings(chunks[i], layers);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min(config_.max_in_flight, chunks.size());
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();

  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (errors[i]) {
      spdlog::warn("chunk {}#{} excluded: {}", chunks[i].book_id, chunks[i].chunk_index, *errors[i]);
      batch.failures.push_back({chunks[i].book_id, chunks[i].chunk_index, *errors[i]});
    }
  }
  return batch;
}

std::map<std::uint32_t, Ensemble> assemble_ensembles(const ExtractionBatch& batch,
                                                     std::span<const std::uint32_t> layers,
                                                     const EnsembleMeta& meta) {
  std::vector<const std::vector<LayerEmbedding>*> ok;
  for (const auto& r : batch.results) {
    if (r) ok.push_back(&*r);
  }
  if (ok.empty()) fail(ErrorCode::InsufficientData, "every chunk of " + meta.book_id + " failed");

  std::map<std::uint32_t, Ensemble> out;
  for (std::uint32_t layer : layers) {
    Ensemble e;
    e.meta = meta;
    e.meta.layer = layer;
    e.meta.excluded_count = static_cast<std::uint32_t>(batch.failures.size());
    for (std::size_t row = 0; row < ok.size(); ++row) {
      const auto& embeddings = *ok[row];
      auto it = std::find_if(embeddings.begin(), embeddings.end(),
                             [&](const LayerEmbedding& le) { return le.layer == layer; });
      if (it == embeddings.end()) {
        fail(ErrorCode::ProtocolViolation, "layer " + std::to_string(layer) + " missing from batch");
      }
      if (row == 0) {
        e.meta.hidden_dim = static_cast<std::uint32_t>(it->vector.size());
        e.rows.resize(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(it->vector.size()));
      }
      e.rows.row(static_cast<Eigen::Index>(row)) =
          Eigen::Map<const Eigen::RowVectorXf>(it->vector.data(), static_cast<Eigen::Index>(it->vector.size()));
    }
    out.emplace(layer, std::move(e));
  }
  return out;
}

}  // namespace styloscope
