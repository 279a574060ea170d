#include "styloscope/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "styloscope/errors.hpp"
#include "styloscope/rng.hpp"

namespace styloscope {
namespace {

constexpr std::string_view kStartMarker = "*** START OF";
constexpr std::string_view kEndMarker = "*** END OF";

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

// Position just past the end of the line containing `pos`.
std::size_t end_of_line(std::string_view s, std::size_t pos) {
  const auto nl = s.find('\n', pos);
  return nl == std::string_view::npos ? s.size() : nl + 1;
}

std::size_t start_of_line(std::string_view s, std::size_t pos) {
  if (pos == 0) return 0;
  const auto nl = s.rfind('\n', pos - 1);
  return nl == std::string_view::npos ? 0 : nl + 1;
}

}  // namespace

StrippedText strip_boilerplate(std::string_view raw_text) {
  const auto start = raw_text.find(kStartMarker);
  if (start == std::string_view::npos) {
    return {std::string(raw_text), false};
  }
  const auto body_begin = end_of_line(raw_text, start);
  const auto end = raw_text.find(kEndMarker, body_begin);
  if (end == std::string_view::npos) {
    fail(ErrorCode::MalformedDocument, "start marker without a matching '*** END OF' line");
  }
  const auto body_end = start_of_line(raw_text, end);
  return {std::string(trim(raw_text.substr(body_begin, body_end - body_begin))), true};
}

std::vector<TokenChunk> chunk_tokens(std::span<const TokenId> token_ids, std::size_t n,
                                     std::string_view book_id) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "chunk length must be >= 1");
  const std::size_t count = token_ids.size() / n;
  std::vector<TokenChunk> chunks;
  chunks.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    TokenChunk c;
    c.book_id = std::string(book_id);
    c.chunk_index = k;
    c.n = n;
    const auto window = token_ids.subspan(k * n, n);
    c.token_ids.assign(window.begin(), window.end());
    chunks.push_back(std::move(c));
  }
  return chunks;
}

TokenChunk block_shuffle(const TokenChunk& chunk, std::size_t b, std::uint64_t seed) {
  if (b == 0 || chunk.n % b != 0) {
    fail(ErrorCode::InvalidBlockSize, "block size " + std::to_string(b) +
                                          " does not divide chunk length " +
                                          std::to_string(chunk.n));
  }
  if (chunk.token_ids.size() != chunk.n) {
    fail(ErrorCode::InvalidArgument, "chunk length does not match its token count");
  }
  const std::size_t blocks = chunk.n / b;
  KeyedStream stream(combine_key(combine_key(seed, fnv1a64(chunk.book_id)), chunk.chunk_index));
  const auto order = shuffled_indices(blocks, stream);

  TokenChunk out = chunk;
  for (std::size_t dst = 0; dst < blocks; ++dst) {
    const auto src = chunk.token_ids.begin() + static_cast<std::ptrdiff_t>(order[dst] * b);
    std::copy(src, src + static_cast<std::ptrdiff_t>(b),
              out.token_ids.begin() + static_cast<std::ptrdiff_t>(dst * b));
  }
  out.shuffle_block = b;
  out.shuffle_seed = seed;
  return out;
}

std::vector<ManifestEntry> read_corpus_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::Io, "cannot open corpus manifest " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, "corpus manifest " + manifest.string() + ": " + e.what());
  }
  const nlohmann::json& books = j.is_object() ? j.at("books") : j;
  if (!books.is_array()) fail(ErrorCode::Config, "corpus manifest must list books");

  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  const auto base = manifest.parent_path();
  for (const auto& b : books) {
    ManifestEntry e;
    try {
      e.book_id = b.at("book_id").get<std::string>();
      e.author_id = b.at("author_id").get<std::string>();
      e.language = b.at("language").get<std::string>();
      e.path = b.at("path").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::Config, std::string("corpus manifest entry: ") + ex.what());
    }
    if (e.book_id.empty()) fail(ErrorCode::Config, "corpus manifest: empty book_id");
    if (!seen.insert(e.book_id).second) {
      fail(ErrorCode::Config, "corpus manifest: duplicate book_id " + e.book_id);
    }
    if (e.path.is_relative()) e.path = base / e.path;
    entries.push_back(std::move(e));
  }
  return entries;
}

RawDocument load_document(const ManifestEntry& entry, bool* markers_found) {
  std::ifstream in(entry.path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open document " + entry.path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto stripped = strip_boilerplate(ss.str());
  if (markers_found) *markers_found = stripped.markers_found;
  if (stripped.text.empty()) {
    fail(ErrorCode::MalformedDocument, "document " + entry.book_id + " has no text");
  }
  return {entry.book_id, entry.author_id, entry.language, std::move(stripped.text)};
}

}  // namespace styloscope
