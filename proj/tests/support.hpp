#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dln/init.hpp"
#include "dln/matrix.hpp"
#include "dln/network.hpp"
#include "dln/rng.hpp"

namespace dln::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double s = 1.0) {
  return gaussian_matrix(r, c, s, rng);
}

// Haar-ish orthogonal matrix from the left factor of a square Gaussian.
inline Matrix random_orthogonal(std::size_t n, Rng& rng) { return svd_thin(random_matrix(n, n, rng)).u; }

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

inline NetSpec random_spec(Rng& rng, std::size_t max_depth, std::size_t max_dim) {
  const std::size_t n = uniform_int(rng, 1, max_depth);
  std::vector<std::size_t> dims(n + 1);
  for (auto& d : dims) d = uniform_int(rng, 1, max_dim);
  return NetSpec(dims);
}

}  // namespace dln::testing
