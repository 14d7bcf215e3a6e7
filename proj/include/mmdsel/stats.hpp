#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mmdsel/errors.hpp"

namespace mmdsel {

// Kolmogorov-Smirnov distance between a sample and Uniform(0,1).
inline double uniform_ks_distance(std::vector<double> sample) {
  if (sample.empty()) throw InputError("uniform_ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double lo = sample[i] - static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n - sample[i];
    sup = std::max(sup, std::max(lo, hi));
  }
  return sup;
}

// KS distance against an arbitrary continuous CDF.
template <typename Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
  if (sample.empty()) throw InputError("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    const double lo = f - static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n - f;
    sup = std::max(sup, std::max(lo, hi));
  }
  return sup;
}

// Asymptotic survival function of the Kolmogorov statistic:
// P(sqrt(n) * D_n > x) -> 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_sf(double x) {
  if (x <= 0.05) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    if (term == 0.0) break;
    sum += (k % 2 == 1) ? term : -term;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Critical KS distance at significance alpha for a sample of size n
// (asymptotic inverse, solved by bisection).
inline double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0) throw InputError("ks_critical_value: n must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InputError("ks_critical_value: alpha must lie in (0, 1)");
  }
  double lo = 0.05, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (kolmogorov_sf(mid) > alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

}  // namespace mmdsel
