#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "gpopt/error.hpp"

namespace gpopt {

// SplitMix64 finalizer; derives independent stream seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::vector<int> first_primes(int count) {
  std::vector<int> primes;
  for (int candidate = 2; static_cast<int>(primes.size()) < count; ++candidate) {
    bool is_prime = true;
    for (int p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(candidate);
  }
  return primes;
}

// Van der Corput radical inverse of `index` in `base`.
inline double radical_inverse(std::uint64_t index, int base) {
  const double inv_base = 1.0 / base;
  double result = 0.0;
  double f = inv_base;
  while (index > 0) {
    result += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
    index /= static_cast<std::uint64_t>(base);
    f *= inv_base;
  }
  return result;
}

/// `count` points of a randomly shifted Halton sequence in [0, 1)^dimension,
/// one per row. The Cranley-Patterson shift is drawn from `seed`, so different
/// seeds give different but equally space-filling designs.
inline Eigen::MatrixXd halton_points(Eigen::Index count, Eigen::Index dimension, std::uint64_t seed) {
  if (dimension < 1) throw InvalidArgument("Halton dimension must be positive");
  if (count < 0) throw InvalidArgument("Halton point count must be non-negative");
  const auto primes = first_primes(static_cast<int>(dimension));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd shift(dimension);
  for (Eigen::Index j = 0; j < dimension; ++j) shift[j] = unit(rng);

  Eigen::MatrixXd out(count, dimension);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < dimension; ++j) {
      double u = radical_inverse(static_cast<std::uint64_t>(i + 1), primes[static_cast<std::size_t>(j)]) + shift[j];
      out(i, j) = u - std::floor(u);
    }
  }
  return out;
}

}  // namespace gpopt
