#include "styloscope/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <tuple>

#include <nlohmann/json.hpp>

#include "styloscope/errors.hpp"
#include "styloscope/rng.hpp"

namespace styloscope {
namespace {

static_assert(std::endian::native == std::endian::little,
              "ENS1 encoding assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'N', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

nlohmann::json meta_to_json(const EnsembleMeta& m) {
  return {{"book_id", m.book_id},       {"author_id", m.author_id},
          {"language", m.language},     {"model_id", m.model_id},
          {"n", m.n},                   {"layer", m.layer},
          {"hidden_dim", m.hidden_dim}, {"shuffle_block", m.shuffle_block},
          {"excluded_count", m.excluded_count}};
}

EnsembleMeta meta_from_json(const nlohmann::json& j) {
  EnsembleMeta m;
  m.book_id = j.at("book_id").get<std::string>();
  m.author_id = j.at("author_id").get<std::string>();
  m.language = j.at("language").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.n = j.at("n").get<std::uint32_t>();
  m.layer = j.at("layer").get<std::uint32_t>();
  m.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
  m.shuffle_block = j.at("shuffle_block").get<std::uint32_t>();
  m.excluded_count = j.at("excluded_count").get<std::uint32_t>();
  return m;
}

auto record_key(const EnsembleRecord& r) {
  return std::tie(r.book_id, r.n, r.layer, r.shuffle_block);
}

}  // namespace

void Ensemble::validate() const {
  if (rows.rows() < 1) fail(ErrorCode::InvalidArgument, "ensemble has no rows");
  if (meta.hidden_dim != rows.cols()) {
    fail(ErrorCode::Format, "ensemble hidden_dim " + std::to_string(meta.hidden_dim) +
                                " does not match row length " + std::to_string(rows.cols()));
  }
  if (!rows.allFinite()) fail(ErrorCode::DataQuality, "ensemble contains non-finite values");
}

bool identical(const Ensemble& a, const Ensemble& b) {
  if (!(a.meta == b.meta)) return false;
  if (a.rows.rows() != b.rows.rows() || a.rows.cols() != b.rows.cols()) return false;
  return std::memcmp(a.rows.data(), b.rows.data(), sizeof(float) * a.rows.size()) == 0;
}

std::vector<std::uint8_t> encode_ensemble(const Ensemble& e) {
  e.validate();
  const std::string meta = meta_to_json(e.meta).dump();
  std::vector<std::uint8_t> out;
  out.reserve(kEns1HeaderBytes + meta.size() + sizeof(float) * e.rows.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kEns1Version);
  put_u32(out, static_cast<std::uint32_t>(e.rows.rows()));
  put_u32(out, static_cast<std::uint32_t>(e.rows.cols()));
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  const auto* payload = reinterpret_cast<const std::uint8_t*>(e.rows.data());
  out.insert(out.end(), payload, payload + sizeof(float) * e.rows.size());
  return out;
}

Ensemble decode_ensemble(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEns1HeaderBytes) fail(ErrorCode::Corruption, "ENS1: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorCode::Format, "ENS1: bad magic");
  if (get_u32(bytes, 4) != kEns1Version) {
    fail(ErrorCode::Format, "ENS1: unsupported version " + std::to_string(get_u32(bytes, 4)));
  }
  const std::uint64_t count = get_u32(bytes, 8);
  const std::uint64_t dim = get_u32(bytes, 12);
  const std::uint64_t meta_len = get_u32(bytes, 16);
  if (bytes.size() < kEns1HeaderBytes + meta_len) {
    fail(ErrorCode::Corruption, "ENS1: truncated metadata");
  }
  Ensemble e;
  try {
    const auto* p = reinterpret_cast<const char*>(bytes.data() + kEns1HeaderBytes);
    e.meta = meta_from_json(nlohmann::json::parse(p, p + meta_len));
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::Format, std::string("ENS1: bad metadata: ") + ex.what());
  }
  if (e.meta.hidden_dim != dim) {
    fail(ErrorCode::Format, "ENS1: header dim disagrees with metadata hidden_dim");
  }
  const std::uint64_t payload = count * dim * sizeof(float);
  const std::uint64_t expected = kEns1HeaderBytes + meta_len + payload;
  if (bytes.size() < expected) fail(ErrorCode::Corruption, "ENS1: truncated payload");
  if (bytes.size() > expected) fail(ErrorCode::Corruption, "ENS1: trailing bytes");
  e.rows.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  std::memcpy(e.rows.data(), bytes.data() + kEns1HeaderBytes + meta_len, payload);
  return e;
}

void write_ensemble(const Ensemble& e, const std::filesystem::path& path) {
  const auto bytes = encode_ensemble(e);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Ensemble read_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  auto e = decode_ensemble(bytes);
  if (!e.rows.allFinite()) fail(ErrorCode::DataQuality, path.string() + ": non-finite rows");
  return e;
}

SplitPair split_train_val(std::size_t count, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    fail(ErrorCode::InvalidArgument, "split ratio must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 0.5));
  if (count < 2 || n_train == 0 || n_train >= count) {
    fail(ErrorCode::DegenerateSplit, "split of " + std::to_string(count) + " rows at ratio " +
                                         std::to_string(ratio) + " leaves an empty side");
  }
  KeyedStream stream(seed, "split");
  auto order = shuffled_indices(count, stream);
  SplitPair s;
  s.ratio = ratio;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

SplitPair split_train_val(const Ensemble& e, double ratio, std::uint64_t seed) {
  return split_train_val(e.count(), ratio, seed);
}

RowMatrixF take_rows(const RowMatrixF& rows, std::span<const std::size_t> idx) {
  RowMatrixF out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

EnsembleIndex EnsembleIndex::load(const std::filesystem::path& path) {
  EnsembleIndex index;
  std::ifstream in(path);
  if (!in) return index;
  nlohmann::json j;
  try {
    in >> j;
    for (const auto& r : j.at("ensembles")) {
      index.records_.push_back({r.at("book_id").get<std::string>(), r.at("n").get<std::uint32_t>(),
                                r.at("layer").get<std::uint32_t>(),
                                r.at("shuffle_block").get<std::uint32_t>(),
                                r.at("file").get<std::string>(),
                                r.value("cache_key", std::string{})});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "ensemble index " + path.string() + ": " + e.what());
  }
  std::sort(index.records_.begin(), index.records_.end(),
            [](const auto& a, const auto& b) { return record_key(a) < record_key(b); });
  return index;
}

void EnsembleIndex::save(const std::filesystem::path& path) const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records_) {
    arr.push_back({{"book_id", r.book_id},
                   {"n", r.n},
                   {"layer", r.layer},
                   {"shuffle_block", r.shuffle_block},
                   {"file", r.file},
                   {"cache_key", r.cache_key}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << nlohmann::json{{"format", "ENS1"}, {"ensembles", arr}}.dump(2) << '\n';
}

const EnsembleRecord* EnsembleIndex::find(const std::string& book_id, std::uint32_t n,
                                          std::uint32_t layer,
                                          std::uint32_t shuffle_block) const {
  const EnsembleRecord probe{book_id, n, layer, shuffle_block, {}, {}};
  auto it = std::lower_bound(records_.begin(), records_.end(), probe,
                             [](const auto& a, const auto& b) { return record_key(a) < record_key(b); });
  if (it != records_.end() && record_key(*it) == record_key(probe)) return &*it;
  return nullptr;
}

void EnsembleIndex::upsert(EnsembleRecord record) {
  auto it = std::lower_bound(records_.begin(), records_.end(), record,
                             [](const auto& a, const auto& b) { return record_key(a) < record_key(b); });
  if (it != records_.end() && record_key(*it) == record_key(record)) {
    *it = std::move(record);
  } else {
    records_.insert(it, std::move(record));
  }
}

}  // namespace styloscope
