#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "mmdsel/errors.hpp"

namespace mmdsel {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// log(exp(la) - exp(lb)) for la >= lb; -inf when the difference underflows.
inline double log_diff_exp(double la, double lb) {
  if (lb == -kInf) return la;
  if (la <= lb) return -kInf;
  return la + std::log1p(-std::exp(lb - la));
}

// log(1 - exp(d)) for d <= 0; -inf at d = 0. Small rounding overshoots of
// d above zero collapse to -inf rather than NaN.
inline double log1p_neg_exp(double d) {
  if (d >= 0.0) return -kInf;
  return std::log1p(-std::exp(d));
}

}  // namespace detail

inline double normal_cdf(double t) {
  return 0.5 * std::erfc(-t / detail::kSqrt2);
}

// log Phi(t), accurate over the whole real line. Three regimes:
//   t >= 8     : Phi is within 1e-15 of 1; log1p of the survival keeps
//                resolution near zero.
//   t >= -34   : erfc does not underflow, take its logarithm directly.
//   t <  -34   : Mills-ratio asymptotic expansion
//                Phi(t) = phi(t)/|t| * (1 - 1/t^2 + 3/t^4 - 15/t^6 + ...),
//                evaluated in log space.
inline double log_normal_cdf(double t) {
  if (t >= 8.0) return std::log1p(-0.5 * std::erfc(t / detail::kSqrt2));
  if (t >= -34.0) return std::log(0.5 * std::erfc(-t / detail::kSqrt2));
  const double s2 = t * t;
  const double series =
      1.0 -
      (1.0 / s2) *
          (1.0 - (3.0 / s2) *
                     (1.0 - (5.0 / s2) *
                                (1.0 - (7.0 / s2) * (1.0 - 9.0 / s2))));
  return -0.5 * s2 - std::log(-t) - detail::kLogSqrt2Pi + std::log(series);
}

// log(1 - Phi(t)).
inline double log_normal_sf(double t) { return log_normal_cdf(-t); }

// CDF of a normal(mu, sigma2) truncated to [lower, upper], evaluated at x.
// Clamped so x <= lower gives 0 and x >= upper gives 1. Either bound may be
// infinite. The ratio is formed from log-space CDF differences oriented
// toward the nearer tail, so windows deep in either tail stay accurate where
// naive Phi differences would return 0/0.
inline double truncated_normal_cdf(double x, double mu, double sigma2,
                                   double lower, double upper) {
  if (!(lower < upper)) {
    throw InputError("truncated_normal_cdf: lower bound " +
                     std::to_string(lower) + " must be below upper bound " +
                     std::to_string(upper));
  }
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw InputError("truncated_normal_cdf: variance must be positive and "
                     "finite, got " +
                     std::to_string(sigma2));
  }
  if (std::isnan(x) || std::isnan(mu)) {
    throw InputError("truncated_normal_cdf: non-finite evaluation point");
  }

  if (x <= lower) return 0.0;
  if (x >= upper) return 1.0;

  const double sigma = std::sqrt(sigma2);
  const double xi = (x - mu) / sigma;
  const double a = lower == -kInf ? -kInf : (lower - mu) / sigma;
  const double b = upper == kInf ? kInf : (upper - mu) / sigma;

  double ratio = std::numeric_limits<double>::quiet_NaN();
  if (a >= 0.0) {
    // Window in the upper tail: F = (1 - Q(xi)/Q(a)) / (1 - Q(b)/Q(a)).
    // The common log Q(a) cancels algebraically and must never be added
    // back: at |log Q| ~ 1e3 its ulp would swallow the near-boundary
    // corrections entirely.
    const double lqa = log_normal_sf(a);
    const double lqx = log_normal_sf(xi);
    const double num_rel = detail::log1p_neg_exp(lqx - lqa);
    const double den_rel =
        b == kInf ? 0.0 : detail::log1p_neg_exp(log_normal_sf(b) - lqa);
    if (den_rel == -kInf || std::isnan(den_rel)) {
      throw NumericalFailureError(
          "truncated_normal_cdf: truncation window has no representable "
          "probability mass");
    }
    ratio = std::exp(num_rel - den_rel);
  } else if (b <= 0.0) {
    // Mirror image in the lower tail: F = Phi(xi)/Phi(b) *
    // (1 - Phi(a)/Phi(xi)) / (1 - Phi(a)/Phi(b)), with the small relative
    // corrections kept separate from the large log ratio.
    const double lpx = log_normal_cdf(xi);
    const double lpb = log_normal_cdf(b);
    const double num_rel =
        a == -kInf ? 0.0 : detail::log1p_neg_exp(log_normal_cdf(a) - lpx);
    const double den_rel =
        a == -kInf ? 0.0 : detail::log1p_neg_exp(log_normal_cdf(a) - lpb);
    if (num_rel == -kInf) {
      ratio = 0.0;
    } else if (den_rel == -kInf || std::isnan(den_rel)) {
      throw NumericalFailureError(
          "truncated_normal_cdf: truncation window has no representable "
          "probability mass");
    } else {
      ratio = std::exp((lpx - lpb) + (num_rel - den_rel));
    }
  } else {
    // a < 0 < b: the denominator spans the bulk, so the erf difference has
    // opposite-signed arguments and never cancels.
    const double erf_a = a == -kInf ? -1.0 : std::erf(a / detail::kSqrt2);
    const double erf_b = b == kInf ? 1.0 : std::erf(b / detail::kSqrt2);
    const double den = 0.5 * (erf_b - erf_a);
    if (!(den > 0.0)) {
      throw NumericalFailureError(
          "truncated_normal_cdf: truncation window has no representable "
          "probability mass");
    }
    double num;
    if (xi <= 0.0) {
      // Same sign as a: log-space difference of lower-tail CDFs.
      const double lpa = a == -kInf ? -kInf : log_normal_cdf(a);
      num = std::exp(detail::log_diff_exp(log_normal_cdf(xi), lpa));
    } else {
      // Opposite sign from a: the direct erf difference is exact enough.
      num = 0.5 * (std::erf(xi / detail::kSqrt2) - erf_a);
    }
    ratio = num / den;
  }

  if (std::isnan(ratio)) {
    throw NumericalFailureError("truncated_normal_cdf: result is NaN");
  }
  if (ratio < 0.0) return 0.0;
  if (ratio > 1.0) return 1.0;
  return ratio;
}

}  // namespace mmdsel
