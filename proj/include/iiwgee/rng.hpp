#pragma once

#include <cstdint>
#include <random>

namespace iiwgee {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based child seed: the stream for task `index` depends only on the
// parent seed and the index, never on how many other tasks ran before it.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                           std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a,
                                           std::uint64_t b) noexcept {
  return derive_seed(derive_seed(parent, a), b);
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

}  // namespace iiwgee
