#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "cllmix/link.hpp"

namespace cllmix {

using Rng = std::mt19937_64;

// SplitMix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of stream `index` under `master`. Streams depend only on the pair, not
// on the order or thread in which they are requested.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

inline double uniform_between(Rng& rng, double lo, double hi) { return lo + (hi - lo) * open_uniform(rng); }

// Box-Muller; consumes two engine outputs per draw.
inline double standard_normal(Rng& rng) {
  const double u1 = open_uniform(rng);
  const double u2 = open_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cllmix
