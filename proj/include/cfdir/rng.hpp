#pragma once

#include <cstdint>
#include <string_view>

namespace cfdir {

/// Identifier recorded in experiment records so datasets and initial
/// weights can be regenerated by any implementation of the same scheme.
inline constexpr std::string_view kRngAlgorithm = "splitmix64-boxmuller-v1";

/// SplitMix64 finaliser (Steele, Lea & Flood 2014).
std::uint64_t mix64(std::uint64_t z) noexcept;

/// 64-bit FNV-1a over the bytes of `tag`.
std::uint64_t fnv1a64(std::string_view tag) noexcept;

/// Deterministic generator for one named purpose.
///
/// Substream derivation: key = mix64(seed ^ mix64(fnv1a64(tag))). The i-th
/// raw output (i = 1, 2, ...) is mix64(key + i * 0x9e3779b97f4a7c15), i.e.
/// a SplitMix64 sequence started at `key`. Uniform doubles take the top 53
/// bits; normals use the cosine branch of Box-Muller on two uniforms.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view tag) noexcept;

  std::uint64_t next_u64() noexcept;
  /// In [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
};

} // namespace cfdir
