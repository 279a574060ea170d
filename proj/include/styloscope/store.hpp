#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace styloscope {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EnsembleMeta {
  std::string book_id;
  std::string author_id;
  std::string language;
  std::string model_id;
  std::uint32_t n = 0;
  std::uint32_t layer = 0;
  std::uint32_t hidden_dim = 0;
  std::uint32_t shuffle_block = 0;
  std::uint32_t excluded_count = 0;

  bool operator==(const EnsembleMeta&) const = default;
};

/// Embeddings of every chunk of one book at fixed (N, L, B); one row per chunk.
struct Ensemble {
  EnsembleMeta meta;
  RowMatrixF rows;

  std::size_t count() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }

  /// Throws if empty, non-finite, or meta.hidden_dim disagrees with the rows.
  void validate() const;
};

/// Bitwise equality of metadata and row payload.
bool identical(const Ensemble& a, const Ensemble& b);

// ENS1 layout (all integers u32 little-endian):
//   "ENS1" | version | count | dim | metadata_len | metadata JSON | count*dim f32 LE
inline constexpr std::uint32_t kEns1Version = 1;
inline constexpr std::size_t kEns1HeaderBytes = 20;

std::vector<std::uint8_t> encode_ensemble(const Ensemble& e);
Ensemble decode_ensemble(std::span<const std::uint8_t> bytes);

void write_ensemble(const Ensemble& e, const std::filesystem::path& path);
Ensemble read_ensemble(const std::filesystem::path& path);

/// Row indices of a train/validation partition.
struct SplitPair {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  double ratio = 0.7;
  std::uint64_t seed = 0;
};

/// |train| = floor(ratio * count + 0.5); rows are assigned by a seeded shuffle.
SplitPair split_train_val(std::size_t count, double ratio, std::uint64_t seed);
SplitPair split_train_val(const Ensemble& e, double ratio, std::uint64_t seed);

RowMatrixF take_rows(const RowMatrixF& rows, std::span<const std::size_t> idx);

/// Index of ensemble files keyed by (book_id, n, layer, shuffle_block).
struct EnsembleRecord {
  std::string book_id;
  std::uint32_t n = 0;
  std::uint32_t layer = 0;
  std::uint32_t shuffle_block = 0;
  std::string file;       // relative to the manifest directory
  std::string cache_key;  // extraction cache key
};

class EnsembleIndex {
 public:
  static EnsembleIndex load(const std::filesystem::path& path);  // empty index if missing
  void save(const std::filesystem::path& path) const;

  const EnsembleRecord* find(const std::string& book_id, std::uint32_t n, std::uint32_t layer,
                             std::uint32_t shuffle_block) const;
  void upsert(EnsembleRecord record);

  const std::vector<EnsembleRecord>& records() const { return records_; }

 private:
  std::vector<EnsembleRecord> records_;  // kept sorted by key
};

}  // namespace styloscope
