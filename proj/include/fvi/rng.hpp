#pragma once

// Deterministic random primitives shared by the samplers. Everything here is
// written against the raw mt19937_64 output stream instead of the standard
// distributions, whose results differ between standard library
// implementations; seeded runs must reproduce bit for bit everywhere.

#include <cstdint>
#include <limits>
#include <random>

namespace fvi {
namespace detail {

/// Uniform draw from {0, ..., n-1} by rejection, so the result is unbiased
/// and depends only on the engine's output stream.
inline std::uint64_t bounded_draw(std::mt19937_64 &rng, std::uint64_t n) {
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
  for (;;) {
    const std::uint64_t r = rng();
    if (rem == 0 || r <= limit) return r % n;
  }
}

/// Uniform double in [0, 1) built from the top 53 bits of one engine output.
inline double unit_real(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Stateless seed for stream number `stream` derived from a master seed
/// (splitmix64 finalizer). Streams can be consumed in any order, or in
/// parallel, and still produce the same per-stream sequences.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail
}  // namespace fvi
