#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace styloscope {

using TokenId = std::int32_t;

/// One novel after boilerplate removal.
struct RawDocument {
  std::string book_id;
  std::string author_id;
  std::string language;  // ISO-639-1
  std::string text;
};

/// A fixed-length window of token IDs taken from one document.
struct TokenChunk {
  std::string book_id;
  std::size_t chunk_index = 0;
  std::vector<TokenId> token_ids;
  std::size_t n = 0;
  std::size_t shuffle_block = 0;             // 0 = unshuffled
  std::optional<std::uint64_t> shuffle_seed;  // set iff shuffled

  bool operator==(const TokenChunk&) const = default;
};

struct StrippedText {
  std::string text;
  bool markers_found = false;  // false means the input passed through unchanged
};

/// Returns the body between the "*** START OF" and "*** END OF" marker lines,
/// trimmed. Throws MalformedDocument if a start marker has no matching end.
StrippedText strip_boilerplate(std::string_view raw_text);

/// Splits into floor(len/n) non-overlapping chunks; the trailing remainder is dropped.
std::vector<TokenChunk> chunk_tokens(std::span<const TokenId> token_ids, std::size_t n,
                                     std::string_view book_id = {});

/// Permutes the n/b consecutive blocks of a chunk. The permutation is drawn
/// from a stream keyed by (seed, book_id, chunk_index). b must divide n.
TokenChunk block_shuffle(const TokenChunk& chunk, std::size_t b, std::uint64_t seed);

struct ManifestEntry {
  std::string book_id;
  std::string author_id;
  std::string language;
  std::filesystem::path path;  // resolved against the manifest's directory
};

/// Reads a corpus manifest: a JSON array of {book_id, author_id, language, path}
/// (or an object with a "books" array of the same).
std::vector<ManifestEntry> read_corpus_manifest(const std::filesystem::path& manifest);

/// Loads the document text for a manifest entry and strips Gutenberg markers.
RawDocument load_document(const ManifestEntry& entry, bool* markers_found = nullptr);

}  // namespace styloscope
