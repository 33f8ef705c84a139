#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace cdsd {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out) v = dist(rng);
}

inline bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

}  // namespace cdsd
