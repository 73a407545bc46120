#pragma once

// Independent reference models used only by the tests. Products are built
// from the explicit partial-product bit matrix p[i][j] = a_i & w_j, which sits
// in result column i + j, instead of the word-level kernels in the library.

#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "axcv/axmult.hpp"

namespace oracle {

inline int bit(std::uint32_t v, unsigned i) { return static_cast<int>((v >> i) & 1u); }

// Sum of the partial-product bits that survive `keep(i, j)`.
template <class Keep>
std::uint32_t bit_matrix_product(std::uint32_t w, std::uint32_t a, Keep keep) {
  std::uint32_t total = 0;
  for (unsigned i = 0; i < 8; ++i)
    for (unsigned j = 0; j < 8; ++j)
      if (keep(i, j) && bit(a, i) && bit(w, j)) total += 1u << (i + j);
  return total;
}

inline std::uint32_t perforated(std::uint32_t w, std::uint32_t a, unsigned m) {
  return bit_matrix_product(w, a, [m](unsigned i, unsigned) { return i >= m; });
}

inline std::uint32_t truncated(std::uint32_t w, std::uint32_t a, unsigned m) {
  return bit_matrix_product(w, a, [m](unsigned i, unsigned j) { return i + j >= m; });
}

// Recursive: drop the low x low quadrant of the bit matrix.
inline std::uint32_t recursive(std::uint32_t w, std::uint32_t a, unsigned m) {
  return bit_matrix_product(w, a, [m](unsigned i, unsigned j) { return !(i < m && j < m); });
}

inline std::uint32_t product(axcv::MultKind kind, std::uint32_t w, std::uint32_t a, unsigned m) {
  switch (kind) {
    case axcv::MultKind::Perforated: return perforated(w, a, m);
    case axcv::MultKind::Recursive: return recursive(w, a, m);
    case axcv::MultKind::Truncated: return truncated(w, a, m);
    default: return w * a;
  }
}

struct KindLevel {
  axcv::MultKind kind;
  unsigned m;
};

// The (kind, m) grid exercised throughout the acceptance criteria.
inline std::vector<KindLevel> criterion_grid() {
  using axcv::MultKind;
  std::vector<KindLevel> g;
  for (unsigned m = 1; m <= 3; ++m) g.push_back({MultKind::Perforated, m});
  for (unsigned m = 2; m <= 5; ++m) g.push_back({MultKind::Recursive, m});
  for (unsigned m = 4; m <= 7; ++m) g.push_back({MultKind::Truncated, m});
  return g;
}

inline std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n, int lo = 0, int hi = 255) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(d(rng));
  return out;
}

// Two-pass sample variance (n - 1 denominator).
inline double sample_variance(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace oracle
