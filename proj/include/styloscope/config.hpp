#pragma once

#include <cstdint>
#include <optional>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "styloscope/extraction.hpp"
#include "styloscope/probes.hpp"

namespace styloscope {

inline constexpr int kConfigSchemaVersion = 1;

using BookPair = std::pair<std::string, std::string>;

struct TransferColumn {
  std::string label;                                 // e.g. "F/H"
  std::vector<std::pair<std::string, BookPair>> by_row;  // row name -> pair
};

/// A whole run, read from one JSON file. Relative paths resolve against the
/// config file's directory.
struct RunConfig {
  std::filesystem::path corpus;
  BackendConfig backend;
  std::vector<std::uint32_t> n_values{8, 16, 32, 64, 128};
  std::vector<std::uint32_t> layers;  // default: 0..layer_count
  std::uint64_t seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::filesystem::path output_dir;
  std::size_t max_chunks_per_book = 0;  // 0 = all
  std::size_t workers = 1;
  RetryPolicy retry;
  LinearProbeConfig probe;
  MlpConfig mlp;

  struct Grid {
    std::vector<BookPair> pairs;
  } grid;

  struct Multiclass {
    std::vector<std::string> books;  // default: every book
    std::optional<std::uint32_t> n;      // default: largest n_values entry
    std::optional<std::uint32_t> layer;  // default: deepest layer
    bool export_activations = false;
  } multiclass;

  struct Sweep {
    BookPair pair;
    std::optional<std::uint32_t> n;
    std::optional<std::uint32_t> layer;
    std::vector<std::size_t> k_values{1, 2, 4, 8, 16, 32};
    std::vector<std::size_t> dims{1, 2, 4, 8, 16, 32, 64};
  } sweep;

  struct Id {
    std::vector<std::string> books;
    double discard = 0.1;
  } id;

  struct Shuffle {
    BookPair pair;
    std::optional<std::uint32_t> n;
    std::optional<std::uint32_t> layer;
    std::vector<std::uint32_t> blocks{1, 4, 32};
  } shuffle;

  struct Transfer {
    BookPair reference;
    std::vector<std::string> rows;  // e.g. FR, GB
    std::vector<TransferColumn> columns;
    std::optional<std::uint32_t> n;
    std::optional<std::uint32_t> layer;
    bool centroid_variant = false;
  } transfer;

  struct Map {
    std::vector<std::string> books;
    std::optional<std::uint32_t> n;
    std::optional<std::uint32_t> layer;
  } map;

  nlohmann::json source;    // the parsed file (output_dir removed)
  std::string config_hash;  // SHA-256 of source.dump()

  std::uint32_t deepest_layer() const;
  std::uint32_t largest_n() const;
};

/// Parses and validates; errors name the offending field.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace styloscope
