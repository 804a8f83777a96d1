#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "mcseg/core/common.hpp"

namespace mcseg {

using Rng = std::mt19937_64;

// splitmix64: cheap stateless mixer used to derive independent stream seeds
// from (seed, index) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [lo, hi] inclusive.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  require(lo <= hi, "uniform_int: empty range [", lo, ", ", hi, "]");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  // rejection sampling keeps the draw unbiased
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return lo + static_cast<std::int64_t>(v % span);
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

// Box-Muller without cached state, so engine serialization captures the
// full RNG state across checkpoints.
inline double normal_sample(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream oss;
  oss << rng;
  return oss.str();
}

inline Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream iss(text);
  iss >> rng;
  require(!iss.fail(), "malformed RNG state string");
  return rng;
}

}  // namespace mcseg
