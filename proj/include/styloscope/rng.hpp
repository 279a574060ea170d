#pragma once

// Counter-based random streams. A stream is identified by a 64-bit key derived
// from user inputs; draw i is a pure function of (key, i), so any chunk or
// training job can be replayed in isolation. The mixing function is the
// SplitMix64 finalizer. Changing any constant here changes every seeded
// result, so bump kStreamVersion with it.

#include <cstdint>
#include <string_view>
#include <vector>

namespace styloscope {

inline constexpr std::uint32_t kStreamVersion = 1;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t combine_key(std::uint64_t key, std::uint64_t part) noexcept {
  return mix64(key ^ (part + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2)));
}

class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) noexcept : key_(mix64(key ^ kStreamVersion)) {}

  KeyedStream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept
      : KeyedStream(combine_key(combine_key(seed, fnv1a64(tag)), index)) {}

  std::uint64_t next() noexcept {
    return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform integer in [0, bound) without modulo bias (Lemire).
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Identity permutation 0..n-1 shuffled by the stream.
std::vector<std::size_t> shuffled_indices(std::size_t n, KeyedStream& stream);

}  // namespace styloscope
