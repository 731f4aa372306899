#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "specdet/tensor.hpp"

namespace specdet {

/// Linear-interpolation quantile of ascending-sorted values (position q·(n−1)).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty set");
  if (!(q >= 0 && q <= 1)) throw ValidationError("quantile level must lie in [0,1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine_similarity(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("cosine_similarity: length mismatch");
  return cosine_similarity(a.data(), b.data(), a.size());
}

}  // namespace specdet
