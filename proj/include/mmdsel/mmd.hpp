#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mmdsel/detail/parallel.hpp"
#include "mmdsel/errors.hpp"
#include "mmdsel/kernel.hpp"
#include "mmdsel/reduce.hpp"
#include "mmdsel/rng.hpp"
#include "mmdsel/types.hpp"

namespace mmdsel {

enum class DesignMode { RandomWithoutReplacement, Linear, Full };

// The index subset over which the incomplete estimator sums. Pairs are
// 0-based (i, j) with i != j referring to rows of the sample matrices.
struct PairDesign {
  std::vector<std::pair<Index, Index>> pairs;
  Index n = 0;  // sample count the indices refer to
  DesignMode mode = DesignMode::RandomWithoutReplacement;

  Index size() const { return static_cast<Index>(pairs.size()); }
};

// Per-pair h-kernel evaluations, one column per candidate model, all columns
// sharing the same design and the same real-sample rows. With a kernel
// bounded in (0, 1] every entry lies in (-2, 2).
struct HMatrix {
  Eigen::MatrixXd values;  // size() x S, column-major
  PairDesign design;
};

// Incomplete MMD^2 estimates for S models plus their estimated covariance.
struct ScoreVector {
  Eigen::VectorXd z;
  Eigen::MatrixXd sigma;
  std::vector<std::string> model_ids;
};

// Two-sample U-statistic kernel:
//   h(u, u') = k(x, x') + k(y, y') - k(x, y') - k(x', y)
// with u = (x, y). Grouping as (same-sample) - (cross-sample) keeps the
// expression bit-identical under swapping (x, y) <-> (x2, y2).
inline double h_kernel(const KernelSpec& spec,
                       const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       const Eigen::Ref<const Eigen::RowVectorXd>& y,
                       const Eigen::Ref<const Eigen::RowVectorXd>& x2,
                       const Eigen::Ref<const Eigen::RowVectorXd>& y2) {
  if (x.size() != y.size() || x.size() != x2.size() || x.size() != y2.size()) {
    throw InputError("h_kernel: all four vectors must share one dimension");
  }
  return (kernel_eval(spec, x, x2) + kernel_eval(spec, y, y2)) -
         (kernel_eval(spec, x, y2) + kernel_eval(spec, x2, y));
}

// Draws the pair design. Random mode samples unordered pairs uniformly
// without replacement (rejection against a hash set) and orients each as
// (min, max); Linear is {(0,1), (2,3), ...}; Full enumerates all n(n-1)
// ordered pairs. Deterministic given (n, ell, mode) and the stream state.
inline PairDesign sample_design(Index n, Index ell, DesignMode mode,
                                PhiloxStream& rng) {
  if (n < 2) throw InputError("sample_design: need n >= 2");
  PairDesign design;
  design.n = n;
  design.mode = mode;
  switch (mode) {
    case DesignMode::Linear: {
      design.pairs.reserve(static_cast<std::size_t>(n / 2));
      for (Index i = 0; i + 1 < n; i += 2) design.pairs.emplace_back(i, i + 1);
      break;
    }
    case DesignMode::Full: {
      design.pairs.reserve(static_cast<std::size_t>(n) *
                           static_cast<std::size_t>(n - 1));
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          if (i != j) design.pairs.emplace_back(i, j);
        }
      }
      break;
    }
    case DesignMode::RandomWithoutReplacement: {
      const std::uint64_t capacity = static_cast<std::uint64_t>(n) *
                                     static_cast<std::uint64_t>(n - 1) / 2;
      if (ell < 1 || static_cast<std::uint64_t>(ell) > capacity) {
        throw InputError("sample_design: ell = " + std::to_string(ell) +
                         " exceeds the " + std::to_string(capacity) +
                         " distinct unordered pairs available for n = " +
                         std::to_string(n));
      }
      std::unordered_set<std::uint64_t> seen;
      seen.reserve(static_cast<std::size_t>(ell) * 2);
      design.pairs.reserve(static_cast<std::size_t>(ell));
      while (design.pairs.size() < static_cast<std::size_t>(ell)) {
        const Index i = static_cast<Index>(rng.next_below(
            static_cast<std::uint64_t>(n)));
        Index j = static_cast<Index>(rng.next_below(
            static_cast<std::uint64_t>(n - 1)));
        if (j >= i) ++j;  // uniform over j != i
        const Index lo = std::min(i, j);
        const Index hi = std::max(i, j);
        const std::uint64_t key = static_cast<std::uint64_t>(lo) *
                                      static_cast<std::uint64_t>(n) +
                                  static_cast<std::uint64_t>(hi);
        if (seen.insert(key).second) design.pairs.emplace_back(lo, hi);
      }
      break;
    }
  }
  return design;
}

inline PairDesign sample_design(Index n, Index ell, DesignMode mode,
                                std::uint64_t seed) {
  PhiloxStream rng(seed, 0);
  return sample_design(n, ell, mode, rng);
}

// Materializes h(u_i, u_j) for every design pair and every model. The pair
// uses rows i, j of model s for the x-parts and rows i, j of the real matrix
// for the y-parts, so the same real-sample rows are shared across all S
// columns. Pairs may be evaluated in parallel; each entry is written to its
// own slot, so the result does not depend on scheduling.
inline HMatrix compute_h_matrix(const KernelSpec& spec,
                                const std::vector<FeatureMatrix>& models,
                                const FeatureMatrix& real, PairDesign design,
                                unsigned threads = 1) {
  if (models.empty()) throw InputError("compute_h_matrix: no models");
  validate_features(real, "compute_h_matrix real");
  const Index n = real.rows();
  const Index d = real.cols();
  for (std::size_t s = 0; s < models.size(); ++s) {
    if (models[s].rows() != n || models[s].cols() != d) {
      throw InputError("compute_h_matrix: model " + std::to_string(s) +
                       " has shape " + std::to_string(models[s].rows()) + "x" +
                       std::to_string(models[s].cols()) +
                       " but the real matrix is " + std::to_string(n) + "x" +
                       std::to_string(d));
    }
    validate_features(models[s], "compute_h_matrix model " + std::to_string(s));
  }
  if (design.n != n) {
    throw InputError("compute_h_matrix: design indexes " +
                     std::to_string(design.n) + " samples but matrices have " +
                     std::to_string(n) + " rows");
  }
  if (design.pairs.empty()) throw InputError("compute_h_matrix: empty design");

  const std::size_t ell = design.pairs.size();
  const std::size_t n_models = models.size();
  HMatrix h;
  h.values.resize(static_cast<Index>(ell), static_cast<Index>(n_models));

  detail::parallel_for_blocks(ell, threads, [&](std::size_t begin,
                                                std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [i, j] = design.pairs[p];
      const double k_real = detail::kernel_from_sqdist(
          spec, (real.row(i) - real.row(j)).squaredNorm());
      for (std::size_t s = 0; s < n_models; ++s) {
        const auto& x = models[s];
        const double k_model = detail::kernel_from_sqdist(
            spec, (x.row(i) - x.row(j)).squaredNorm());
        const double k_cross_ij = detail::kernel_from_sqdist(
            spec, (x.row(i) - real.row(j)).squaredNorm());
        const double k_cross_ji = detail::kernel_from_sqdist(
            spec, (x.row(j) - real.row(i)).squaredNorm());
        h.values(static_cast<Index>(p), static_cast<Index>(s)) =
            (k_model + k_real) - (k_cross_ij + k_cross_ji);
      }
    }
  });

  h.design = std::move(design);
  return h;
}

// Incomplete-estimator scores: the per-column mean of the h-matrix, summed
// with the fixed-shape pairwise reduction so results are bit-identical
// across runs and thread counts. Equals the complete U-statistic exactly
// when the design mode is Full.
inline Eigen::VectorXd mmd_incomplete(const HMatrix& h) {
  const Index ell = h.values.rows();
  if (ell < 1) throw InputError("mmd_incomplete: empty h-matrix");
  Eigen::VectorXd z(h.values.cols());
  for (Index s = 0; s < h.values.cols(); ++s) {
    z[s] = pairwise_sum(h.values.col(s).data(),
                        static_cast<std::size_t>(ell)) /
           static_cast<double>(ell);
  }
  return z;
}

// Complete U-statistic MMD^2: (1 / (n(n-1))) sum_{i != j} h(u_i, u_j).
// O(n^2); exercised on its own straightforward loop so it can serve as an
// independent oracle for the incomplete estimator.
inline double mmd_complete(const KernelSpec& spec, const FeatureMatrix& x,
                           const FeatureMatrix& y) {
  validate_features(x, "mmd_complete x");
  validate_features(y, "mmd_complete y");
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw InputError("mmd_complete: x and y must have identical shape");
  }
  const Index n = x.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double k_x = detail::kernel_from_sqdist(
          spec, (x.row(i) - x.row(j)).squaredNorm());
      const double k_y = detail::kernel_from_sqdist(
          spec, (y.row(i) - y.row(j)).squaredNorm());
      const double k_xy = detail::kernel_from_sqdist(
          spec, (x.row(i) - y.row(j)).squaredNorm());
      const double k_yx = detail::kernel_from_sqdist(
          spec, (x.row(j) - y.row(i)).squaredNorm());
      total += (k_x + k_y) - (k_xy + k_yx);
    }
  }
  // h is symmetric in its pair, so the i < j sum covers both orientations.
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// Score vector plus covariance estimate. z is a mean of ell h-matrix rows,
// so its covariance is estimated as the row sample covariance divided by
// ell, stabilized by a relative ridge eps * I with
// eps = ridge_scale * trace(raw) / S. Columns with zero variance or pairs of
// columns that are exactly correlated are rejected before the ridge could
// paper over them.
inline ScoreVector estimate_scores(const HMatrix& h,
                                   double ridge_scale = 1e-8,
                                   std::vector<std::string> model_ids = {}) {
  const Index ell = h.values.rows();
  const Index s_count = h.values.cols();
  if (ell < 2) throw InputError("estimate_scores: need at least 2 design pairs");
  if (s_count < 2) throw InputError("estimate_scores: need at least 2 models");
  if (!(ridge_scale >= 0.0)) {
    throw InputError("estimate_scores: ridge_scale must be nonnegative");
  }
  if (model_ids.empty()) {
    model_ids.reserve(static_cast<std::size_t>(s_count));
    for (Index s = 0; s < s_count; ++s) {
      model_ids.push_back("model-" + std::to_string(s));
    }
  } else if (static_cast<Index>(model_ids.size()) != s_count) {
    throw InputError("estimate_scores: model_ids size mismatch");
  }

  ScoreVector scores;
  scores.model_ids = std::move(model_ids);
  scores.z = mmd_incomplete(h);

  const Eigen::MatrixXd centered =
      h.values.rowwise() - scores.z.transpose();
  const Eigen::MatrixXd row_cov =
      centered.adjoint() * centered / static_cast<double>(ell - 1);

  auto name = [&](Index s) {
    return "column " + std::to_string(s) + " (" +
           scores.model_ids[static_cast<std::size_t>(s)] + ")";
  };
  for (Index s = 0; s < s_count; ++s) {
    if (!(row_cov(s, s) > 0.0)) {
      throw DegenerateCovarianceError("estimate_scores: " + name(s) +
                                      " has zero variance (constant h column)");
    }
  }
  for (Index s = 0; s < s_count; ++s) {
    for (Index t = s + 1; t < s_count; ++t) {
      const double bound =
          (1.0 - 1e-12) * std::sqrt(row_cov(s, s) * row_cov(t, t));
      if (std::abs(row_cov(s, t)) >= bound) {
        throw DegenerateCovarianceError(
            "estimate_scores: " + name(s) + " and " + name(t) +
            " are perfectly correlated (duplicate model?)");
      }
    }
  }

  Eigen::MatrixXd sigma = row_cov / static_cast<double>(ell);
  const double eps = ridge_scale * sigma.trace() / static_cast<double>(s_count);
  sigma += eps * Eigen::MatrixXd::Identity(s_count, s_count);

  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DegenerateCovarianceError(
        "estimate_scores: covariance not positive definite after ridge");
  }

  scores.sigma = std::move(sigma);
  return scores;
}

}  // namespace mmdsel
