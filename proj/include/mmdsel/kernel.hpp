#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mmdsel/errors.hpp"
#include "mmdsel/rng.hpp"
#include "mmdsel/types.hpp"

namespace mmdsel {

enum class KernelFamily { Gaussian };

// A positive-definite kernel. Only the Gaussian family
// k(x, x') = exp(-gamma * |x - x'|^2) is implemented; new families extend
// the switch in kernel_eval without touching the estimators built on top.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double gamma = 1.0;  // inverse squared length-scale

  static KernelSpec gaussian(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw InputError("KernelSpec: gamma must be positive and finite, got " +
                       std::to_string(gamma));
    }
    return KernelSpec{KernelFamily::Gaussian, gamma};
  }
};

namespace detail {

inline double kernel_from_sqdist(const KernelSpec& spec, double sqdist) {
  switch (spec.family) {
    case KernelFamily::Gaussian:
      return std::exp(-spec.gamma * sqdist);
  }
  throw InputError("kernel_from_sqdist: unknown kernel family");
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec,
                          const Eigen::Ref<const Eigen::RowVectorXd>& x,
                          const Eigen::Ref<const Eigen::RowVectorXd>& x2) {
  if (x.size() != x2.size()) {
    throw InputError("kernel_eval: dimension mismatch (" +
                     std::to_string(x.size()) + " vs " +
                     std::to_string(x2.size()) + ")");
  }
  if (x.size() < 1) throw InputError("kernel_eval: empty vectors");
  if (!x.allFinite() || !x2.allFinite()) {
    throw InputError("kernel_eval: non-finite entry");
  }
  return detail::kernel_from_sqdist(spec, (x - x2).squaredNorm());
}

// Median-heuristic bandwidth: gamma = 1 / (2 m^2) where m is the median of
// the pairwise Euclidean distances among a seeded subsample of up to
// max_points rows (all rows when the input is small enough). The median of
// an even-length distance list is the lower middle element, so the returned
// length-scale is always an observed distance.
inline double median_heuristic_gamma(const FeatureMatrix& pooled,
                                     std::size_t max_points,
                                     PhiloxStream& rng) {
  validate_features(pooled, "median_heuristic_gamma");
  if (max_points < 2) {
    throw InputError("median_heuristic_gamma: max_points must be >= 2");
  }

  const std::size_t n = static_cast<std::size_t>(pooled.rows());
  std::vector<Index> rows(n);
  std::iota(rows.begin(), rows.end(), Index{0});
  if (n > max_points) {
    // Partial Fisher-Yates; chosen indices are re-sorted so the distance
    // enumeration order does not depend on the draw order.
    for (std::size_t i = 0; i < max_points; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(rows[i], rows[j]);
    }
    rows.resize(max_points);
    std::sort(rows.begin(), rows.end());
  }

  const std::size_t m = rows.size();
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      dist.push_back((pooled.row(rows[i]) - pooled.row(rows[j])).norm());
    }
  }

  const std::size_t mid = (dist.size() - 1) / 2;  // lower middle when even
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid),
                   dist.end());
  const double median = dist[mid];
  if (!(median > 0.0)) {
    throw DegenerateDataError(
        "median_heuristic_gamma: median pairwise distance is zero (all "
        "subsampled points identical)");
  }
  return 0.5 / (median * median);
}

inline double median_heuristic_gamma(const FeatureMatrix& pooled,
                                     std::size_t max_points,
                                     std::uint64_t seed) {
  PhiloxStream rng(seed, 0);
  return median_heuristic_gamma(pooled, max_points, rng);
}

}  // namespace mmdsel
