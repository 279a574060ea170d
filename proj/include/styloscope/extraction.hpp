#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "styloscope/corpus.hpp"
#include "styloscope/store.hpp"

namespace styloscope {

struct BackendConfig {
  std::string endpoint;  // http://host:port[/prefix] or synthetic://
  std::string model_id;
  std::uint32_t layer_count = 16;
  std::uint32_t hidden_dim = 2048;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  // Which hidden state the backend reports; "residual" is the block output
  // before the final normalization layer.
  std::string hidden_state_view = "residual";

  void validate() const;
};

/// Hidden state at the last token after `layer` blocks (0 = embedding table).
struct LayerEmbedding {
  std::uint32_t layer = 0;
  std::vector<float> vector;
};

struct HiddenResponse {
  std::map<std::uint32_t, std::vector<float>> hidden;
  std::uint32_t dim = 0;
};

/// Transport to an inference server. Implementations throw Error with
/// ErrorCode::Transport for retryable failures and ErrorCode::Request for
/// permanent rejections.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::vector<TokenId> tokenize(const std::string& text) = 0;
  virtual HiddenResponse hidden(std::span<const TokenId> token_ids,
                                std::span<const std::uint32_t> layers) = 0;
};

/// JSON-over-HTTP backend:
///   POST {endpoint}/v1/tokenize {"model", "text"} -> {"token_ids"}
///   POST {endpoint}/v1/hidden {"model", "token_ids", "layers", "position": "last"}
///        -> {"hidden": {"<layer>": [...]}, "dim"}
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  std::vector<TokenId> tokenize(const std::string& text) override;
  HiddenResponse hidden(std::span<const TokenId> token_ids,
                        std::span<const std::uint32_t> layers) override;

 private:
  std::string post(const std::string& route, const std::string& body);

  BackendConfig config_;
  std::string scheme_host_port_;
  std::string prefix_;
};

/// Deterministic stand-in for a transformer. Tokens are words and punctuation
/// hashed into a fixed vocabulary; each token ID maps to a seeded Gaussian
/// embedding. Layer L mixes the last-token embedding with the chunk's mean
/// token embedding at weight gain * sqrt(N) * L / layer_count, so layer 0
/// depends only on the last token and contextual signal grows with N and L.
class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(BackendConfig config, double context_gain = 1.0);
  std::vector<TokenId> tokenize(const std::string& text) override;
  HiddenResponse hidden(std::span<const TokenId> token_ids,
                        std::span<const std::uint32_t> layers) override;

  static constexpr TokenId kVocabSize = 50000;

 private:
  const std::vector<float>& embedding(TokenId token);

  BackendConfig config_;
  double context_gain_;
  std::uint64_t model_key_;
  std::mutex mu_;
  std::unordered_map<TokenId, std::vector<float>> table_;
};

/// Picks HttpBackend or SyntheticBackend from the endpoint scheme.
std::shared_ptr<Backend> make_backend(const BackendConfig& config);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{200};  // doubled after each retry
};

struct ChunkFailure {
  std::string book_id;
  std::size_t chunk_index = 0;
  std::string reason;
};

struct ExtractionBatch {
  // Aligned with the input chunks; nullopt where the chunk failed.
  std::vector<std::optional<std::vector<LayerEmbedding>>> results;
  std::vector<ChunkFailure> failures;
};

/// Validating, retrying client. Safe to share between threads; at most
/// config.max_in_flight backend calls run at once.
class EmbeddingClient {
 public:
  EmbeddingClient(std::shared_ptr<Backend> backend, BackendConfig config, RetryPolicy retry = {});

  std::vector<TokenId> tokenize_text(const std::string& text);

  /// One embedding per requested layer, ordered by layer.
  std::vector<LayerEmbedding> extract_last_token_embeddings(const TokenChunk& chunk,
                                                            std::span<const std::uint32_t> layers);

  /// Extracts every chunk with up to max_in_flight workers. Chunks that still
  /// fail after retries are reported in `failures`, never dropped silently.
  ExtractionBatch extract_all(std::span<const TokenChunk> chunks,
                              std::span<const std::uint32_t> layers);

  const BackendConfig& config() const { return config_; }

 private:
  template <typename F>
  auto with_retry(F&& call) -> decltype(call());

  class Gate {
   public:
    explicit Gate(std::size_t limit) : free_(limit) {}
    void acquire();
    void release();

   private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t free_;
  };

  std::shared_ptr<Backend> backend_;
  BackendConfig config_;
  RetryPolicy retry_;
  Gate gate_;
};

/// Builds one ensemble per layer from an extraction batch, keeping successful
/// chunks in chunk order. `meta` supplies provenance; layer, hidden_dim and
/// excluded_count are filled in.
std::map<std::uint32_t, Ensemble> assemble_ensembles(const ExtractionBatch& batch,
                                                     std::span<const std::uint32_t> layers,
                                                     const EnsembleMeta& meta);

}  // namespace styloscope
