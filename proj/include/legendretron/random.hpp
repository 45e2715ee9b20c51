#pragma once

// Deterministic random helpers. Everything here is defined in terms of raw
// engine output so results do not depend on the standard library's
// distribution implementations.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace legendretron {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream identified by `stream` under `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n), unbiased (rejection on the top bits).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

inline double standard_normal(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Point drawn uniformly from the ball of the given radius in R^dim.
inline std::vector<double> uniform_in_ball(Rng& rng, std::size_t dim, double radius) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& c : v) {
      c = standard_normal(rng);
      norm2 += c * c;
    }
  } while (norm2 == 0.0);
  const double r = radius * std::pow(uniform01(rng), 1.0 / static_cast<double>(dim));
  const double scale = r / std::sqrt(norm2);
  for (auto& c : v) c *= scale;
  return v;
}

/// Flat Dirichlet(1, ..., 1) draw on the open simplex.
inline std::vector<double> uniform_simplex(Rng& rng, std::size_t classes) {
  std::vector<double> p(classes);
  double total = 0.0;
  for (auto& c : p) {
    double u;
    do {
      u = uniform01(rng);
    } while (u <= 0.0);
    c = -std::log(u);
    total += c;
  }
  for (auto& c : p) c /= total;
  return p;
}

}  // namespace legendretron
