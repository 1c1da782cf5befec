#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ctalign/distributions.hpp"
#include "ctalign/numerics.hpp"

namespace ctalign::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = n(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Strictly positive weights.
inline SimplexVector random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) total += (x = u(rng));
  for (double& x : w) x /= total;
  return SimplexVector(std::move(w));
}

inline DiscretePointSet random_set(std::size_t d, std::size_t n, std::mt19937_64& rng) {
  return make_point_set(random_matrix(d, n, rng), random_simplex(n, rng));
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace ctalign::testing
