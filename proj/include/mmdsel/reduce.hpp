#pragma once

#include <cstddef>
#include <span>

namespace mmdsel {

// Fixed-shape pairwise (tree) summation. The reduction tree depends only on
// the element count, so the result is bit-identical across runs and thread
// counts, and rounding error grows as O(log n) instead of O(n).
inline double pairwise_sum(const double* values, std::size_t count) {
  if (count <= 32) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += values[i];
    return acc;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, count - half);
}

inline double pairwise_sum(std::span<const double> values) {
  return pairwise_sum(values.data(), values.size());
}

inline double pairwise_mean(std::span<const double> values) {
  return pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace mmdsel
