#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "mmdsel/errors.hpp"
#include "mmdsel/mmd.hpp"
#include "mmdsel/normal.hpp"

namespace mmdsel {

// The observed argmin selection encoded as the polytope A z <= b. Row for
// each unselected m carries +1 at the selected column and -1 at column m;
// b is identically zero.
struct SelectionEvent {
  Eigen::MatrixXd a_matrix;  // (S-1) x S
  Eigen::VectorXd b;         // zeros
  Index selected = 0;
};

// Truncation window for the selective pivot. lower/upper may be -inf/+inf
// when no constraint binds in the corresponding direction; otherwise
// lower < eta_z < upper holds strictly (up to floating slack).
struct TruncatedInterval {
  double lower = -kInf;
  double upper = kInf;
  double eta_z = 0.0;          // observed linear functional of the scores
  double eta_sigma_eta = 0.0;  // its variance under the plug-in covariance
};

enum class Sidedness { OneSided, TwoSided };

struct SelectionResult {
  Index selected = 0;
  Eigen::VectorXd z;
  TruncatedInterval interval;
  double p_value = 1.0;
};

// Argmin with ties broken toward the lowest index.
inline Index select_best(const Eigen::VectorXd& z) {
  if (z.size() < 2) throw InputError("select_best: need at least two scores");
  if (!z.allFinite()) throw InputError("select_best: non-finite score");
  Index best = 0;
  for (Index s = 1; s < z.size(); ++s) {
    if (z[s] < z[best]) best = s;
  }
  return best;
}

inline SelectionEvent build_selection_event(const Eigen::VectorXd& z, Index k) {
  if (k < 0 || k >= z.size()) {
    throw InputError("build_selection_event: index out of range");
  }
  if (k != select_best(z)) {
    throw InconsistentEventError(
        "build_selection_event: index " + std::to_string(k) +
        " is not the argmin of the scores");
  }
  const Index s_count = z.size();
  SelectionEvent event;
  event.selected = k;
  event.a_matrix = Eigen::MatrixXd::Zero(s_count - 1, s_count);
  event.b = Eigen::VectorXd::Zero(s_count - 1);
  Index row = 0;
  for (Index m = 0; m < s_count; ++m) {
    if (m == k) continue;
    event.a_matrix(row, k) = 1.0;
    event.a_matrix(row, m) = -1.0;
    ++row;
  }
  if (((event.a_matrix * z).array() > event.b.array()).any()) {
    throw InconsistentEventError(
        "build_selection_event: A z <= b violated by the given scores");
  }
  return event;
}

// Truncation points of the polyhedral selection event for the direction eta:
// with alpha = A Sigma eta / (eta' Sigma eta),
//   lower = max over {j : alpha_j < 0} of (b_j - (Az)_j) / alpha_j + eta'z
//   upper = min over {j : alpha_j > 0} of (b_j - (Az)_j) / alpha_j + eta'z
// Rows with alpha_j ~ 0 constrain nothing in the eta direction and are
// skipped (threshold 1e-12 relative to the largest |alpha_j|).
inline TruncatedInterval truncation_points(const SelectionEvent& event,
                                           const Eigen::VectorXd& z,
                                           const Eigen::MatrixXd& sigma,
                                           const Eigen::VectorXd& eta) {
  const Index s_count = z.size();
  if (sigma.rows() != s_count || sigma.cols() != s_count ||
      eta.size() != s_count || event.a_matrix.cols() != s_count) {
    throw InputError("truncation_points: dimension mismatch");
  }

  const Eigen::VectorXd sigma_eta = sigma * eta;
  const double eta_sigma_eta = eta.dot(sigma_eta);
  if (!(eta_sigma_eta > 0.0) || !std::isfinite(eta_sigma_eta)) {
    throw DegenerateCovarianceError(
        "truncation_points: eta' Sigma eta must be positive, got " +
        std::to_string(eta_sigma_eta));
  }

  const double eta_z = eta.dot(z);
  const Eigen::VectorXd alpha = (event.a_matrix * sigma_eta) / eta_sigma_eta;
  const Eigen::VectorXd az = event.a_matrix * z;
  const double alpha_floor = 1e-12 * alpha.cwiseAbs().maxCoeff();

  TruncatedInterval interval;
  interval.eta_z = eta_z;
  interval.eta_sigma_eta = eta_sigma_eta;
  for (Index j = 0; j < alpha.size(); ++j) {
    if (std::abs(alpha[j]) <= alpha_floor) continue;
    const double candidate = (event.b[j] - az[j]) / alpha[j] + eta_z;
    if (alpha[j] < 0.0) {
      interval.lower = std::max(interval.lower, candidate);
    } else {
      interval.upper = std::min(interval.upper, candidate);
    }
  }

  const double slack =
      1e-12 * std::max({std::abs(eta_z),
                        std::isfinite(interval.lower) ? std::abs(interval.lower)
                                                      : 0.0,
                        std::isfinite(interval.upper) ? std::abs(interval.upper)
                                                      : 0.0,
                        std::sqrt(eta_sigma_eta)});
  if (interval.lower - eta_z > slack || eta_z - interval.upper > slack) {
    throw InternalConsistencyError(
        "truncation_points: observed eta'z = " + std::to_string(eta_z) +
        " fell outside [" + std::to_string(interval.lower) + ", " +
        std::to_string(interval.upper) + "]");
  }
  return interval;
}

// Selective p-value under H0: eta'mu = 0. One-sided upper tail by default:
// MMD^2 is nonnegative in population, so only large positive eta'z is
// evidence against H0. The upper tail is computed by mirroring the CDF,
// which keeps full resolution for tiny p.
inline double selective_p_value(const TruncatedInterval& interval,
                                Sidedness sided = Sidedness::OneSided) {
  const double upper_tail =
      truncated_normal_cdf(-interval.eta_z, 0.0, interval.eta_sigma_eta,
                           -interval.upper, -interval.lower);
  if (sided == Sidedness::OneSided) {
    return std::clamp(upper_tail, 0.0, 1.0);
  }
  const double cdf = truncated_normal_cdf(
      interval.eta_z, 0.0, interval.eta_sigma_eta, interval.lower,
      interval.upper);
  return std::clamp(2.0 * std::min(cdf, upper_tail), 0.0, 1.0);
}

// Full selective test: pick the lowest score, condition on that selection,
// and test H0 "the selected model's population discrepancy is zero" with
// eta = e_k.
inline SelectionResult select_and_test(const ScoreVector& scores,
                                       Sidedness sided = Sidedness::OneSided) {
  if (scores.z.size() < 2) {
    throw InputError("select_and_test: selection requires at least two models");
  }
  SelectionResult result;
  result.z = scores.z;
  result.selected = select_best(scores.z);
  const SelectionEvent event = build_selection_event(scores.z, result.selected);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(scores.z.size());
  eta[result.selected] = 1.0;
  result.interval =
      truncation_points(event, scores.z, scores.sigma, eta);
  result.p_value = selective_p_value(result.interval, sided);
  return result;
}

}  // namespace mmdsel
