#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmdsel/detail/parallel.hpp"
#include "mmdsel/errors.hpp"
#include "mmdsel/kernel.hpp"
#include "mmdsel/mmd.hpp"
#include "mmdsel/psi.hpp"
#include "mmdsel/stats.hpp"
#include "mmdsel/types.hpp"

namespace mmdsel {

// Synthetic stand-ins for candidate generative models. The base "real"
// distribution in every study is the standard Gaussian in `dim` dimensions.
//  - GaussianMeanShift: N(delta * 1, I); the shift is applied to every
//    coordinate.
//  - GaussianScale: N(0, factor^2 * I).
//  - GaussianMixtureDrop: equal-weight mixture of `modes_total` unit
//    Gaussians centered on a lattice along the first axis (spacing 4),
//    sampling only the first `modes_kept` components.
struct SyntheticModelSpec {
  enum class Family { GaussianMeanShift, GaussianScale, GaussianMixtureDrop };

  Family family = Family::GaussianMeanShift;
  double delta = 0.0;
  double factor = 1.0;
  int modes_kept = 1;
  int modes_total = 1;
  Index dim = 8;
  std::string label;

  static SyntheticModelSpec mean_shift(double delta, Index dim,
                                       std::string label) {
    SyntheticModelSpec spec;
    spec.family = Family::GaussianMeanShift;
    spec.delta = delta;
    spec.dim = dim;
    spec.label = std::move(label);
    spec.validate();
    return spec;
  }

  static SyntheticModelSpec scale(double factor, Index dim,
                                  std::string label) {
    SyntheticModelSpec spec;
    spec.family = Family::GaussianScale;
    spec.factor = factor;
    spec.dim = dim;
    spec.label = std::move(label);
    spec.validate();
    return spec;
  }

  static SyntheticModelSpec mixture_drop(int modes_kept, int modes_total,
                                         Index dim, std::string label) {
    SyntheticModelSpec spec;
    spec.family = Family::GaussianMixtureDrop;
    spec.modes_kept = modes_kept;
    spec.modes_total = modes_total;
    spec.dim = dim;
    spec.label = std::move(label);
    spec.validate();
    return spec;
  }

  void validate() const {
    if (dim < 1) throw InputError("SyntheticModelSpec: dim must be >= 1");
    if (!(std::isfinite(delta))) {
      throw InputError("SyntheticModelSpec: delta must be finite");
    }
    if (!(factor > 0.0) || !std::isfinite(factor)) {
      throw InputError("SyntheticModelSpec: factor must be positive");
    }
    if (modes_kept < 1 || modes_kept > modes_total) {
      throw InputError(
          "SyntheticModelSpec: need 1 <= modes_kept <= modes_total");
    }
  }
};

inline FeatureMatrix sample_standard_gaussian(Index n, Index dim,
                                              PhiloxStream& rng) {
  FeatureMatrix m(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j) m(i, j) = rng.next_gaussian();
  }
  return m;
}

inline FeatureMatrix sample_model(const SyntheticModelSpec& spec, Index n,
                                  PhiloxStream& rng) {
  spec.validate();
  FeatureMatrix m(n, spec.dim);
  switch (spec.family) {
    case SyntheticModelSpec::Family::GaussianMeanShift: {
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < spec.dim; ++j) m(i, j) = rng.next_gaussian();
      }
      if (spec.delta != 0.0) m.array() += spec.delta;
      break;
    }
    case SyntheticModelSpec::Family::GaussianScale: {
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < spec.dim; ++j) {
          m(i, j) = spec.factor * rng.next_gaussian();
        }
      }
      break;
    }
    case SyntheticModelSpec::Family::GaussianMixtureDrop: {
      constexpr double kModeSpacing = 4.0;
      const double mid = 0.5 * static_cast<double>(spec.modes_total - 1);
      for (Index i = 0; i < n; ++i) {
        const auto comp = static_cast<double>(
            rng.next_below(static_cast<std::uint64_t>(spec.modes_kept)));
        for (Index j = 0; j < spec.dim; ++j) m(i, j) = rng.next_gaussian();
        m(i, 0) += kModeSpacing * (comp - mid);
      }
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Shared scoring pipeline: pooled median-heuristic bandwidth, one design
// shared by all models, h-matrix, score vector with covariance.

struct PipelineConfig {
  int r = 5;  // design size multiplier, ell = r * n in random mode
  DesignMode design_mode = DesignMode::RandomWithoutReplacement;
  std::optional<double> gamma_override;
  double ridge_scale = 1e-8;
  std::size_t bandwidth_max_points = 1000;
  unsigned threads = 1;  // parallelism inside compute_h_matrix
};

struct PipelineResult {
  double gamma = 0.0;
  Index ell = 0;
  ScoreVector scores;
};

namespace detail {

// Subsample of up to max_points rows drawn from the virtual concatenation
// [real; model_0; ...; model_{S-1}] without materializing it. Selection is a
// partial Fisher-Yates over global row indices, re-sorted so the gathered
// order is canonical.
inline FeatureMatrix pooled_subsample(const std::vector<FeatureMatrix>& models,
                                      const FeatureMatrix& real,
                                      std::size_t max_points,
                                      PhiloxStream& rng) {
  const std::uint64_t n = static_cast<std::uint64_t>(real.rows());
  const std::uint64_t total = n * (models.size() + 1);
  std::vector<std::uint64_t> chosen;
  if (total <= max_points) {
    chosen.resize(total);
    std::iota(chosen.begin(), chosen.end(), std::uint64_t{0});
  } else {
    std::vector<std::uint64_t> indices(total);
    std::iota(indices.begin(), indices.end(), std::uint64_t{0});
    for (std::size_t i = 0; i < max_points; ++i) {
      const std::uint64_t j = i + rng.next_below(total - i);
      std::swap(indices[i], indices[j]);
    }
    chosen.assign(indices.begin(),
                  indices.begin() + static_cast<std::ptrdiff_t>(max_points));
    std::sort(chosen.begin(), chosen.end());
  }

  FeatureMatrix out(static_cast<Index>(chosen.size()), real.cols());
  for (std::size_t row = 0; row < chosen.size(); ++row) {
    const std::uint64_t g = chosen[row];
    if (g < n) {
      out.row(static_cast<Index>(row)) = real.row(static_cast<Index>(g));
    } else {
      const std::size_t s = static_cast<std::size_t>((g - n) / n);
      out.row(static_cast<Index>(row)) =
          models[s].row(static_cast<Index>((g - n) % n));
    }
  }
  return out;
}

inline double logdet_spd(const Eigen::MatrixXd& m) {
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DegenerateCovarianceError("logdet_spd: matrix not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

struct HPipeline {
  double gamma = 0.0;
  HMatrix h;
};

// First pipeline stage: one bandwidth from the pooled subsample, one design,
// one h-matrix shared by every model.
inline HPipeline build_h_pipeline(const std::vector<FeatureMatrix>& models,
                                  const FeatureMatrix& real,
                                  const PipelineConfig& cfg,
                                  PhiloxStream& bandwidth_rng,
                                  PhiloxStream& design_rng) {
  if (models.empty()) throw InputError("build_h_pipeline: no models");
  if (cfg.r < 1) throw InputError("build_h_pipeline: r must be >= 1");

  HPipeline result;
  if (cfg.gamma_override) {
    if (!(*cfg.gamma_override > 0.0) || !std::isfinite(*cfg.gamma_override)) {
      throw InputError("build_h_pipeline: gamma override must be positive");
    }
    result.gamma = *cfg.gamma_override;
  } else {
    const FeatureMatrix pooled = detail::pooled_subsample(
        models, real, cfg.bandwidth_max_points, bandwidth_rng);
    result.gamma = median_heuristic_gamma(
        pooled, static_cast<std::size_t>(pooled.rows()), bandwidth_rng);
  }

  const KernelSpec spec = KernelSpec::gaussian(result.gamma);
  const Index n = real.rows();
  const Index ell = static_cast<Index>(cfg.r) * n;
  PairDesign design = sample_design(n, ell, cfg.design_mode, design_rng);
  result.h = compute_h_matrix(spec, models, real, std::move(design),
                              cfg.threads);
  return result;
}

// Scores all models against the real sample with a single bandwidth and a
// single shared design, which is what makes the cross-model covariance (and
// with it the selection event) coherent.
inline PipelineResult score_models(const std::vector<FeatureMatrix>& models,
                                   const std::vector<std::string>& labels,
                                   const FeatureMatrix& real,
                                   const PipelineConfig& cfg,
                                   PhiloxStream& bandwidth_rng,
                                   PhiloxStream& design_rng) {
  if (models.size() < 2) {
    throw InputError("score_models: need at least two models");
  }
  if (labels.size() != models.size()) {
    throw InputError("score_models: labels/models size mismatch");
  }
  HPipeline pipeline =
      build_h_pipeline(models, real, cfg, bandwidth_rng, design_rng);
  PipelineResult result;
  result.gamma = pipeline.gamma;
  result.ell = pipeline.h.design.size();
  result.scores = estimate_scores(pipeline.h, cfg.ridge_scale, labels);
  return result;
}

// ---------------------------------------------------------------------------
// Studies. Every study is a pure function of (parameters, seed): each
// (trial, role) pair draws from its own counter-based stream, so trials can
// run in parallel and the sample sets within a trial are disjoint by
// construction. Reports are stored in trial-index order.

struct TrialReport {
  std::uint64_t seed = 0;  // master seed of the study
  std::uint32_t trial = 0;
  std::vector<std::string> labels;
  Eigen::VectorXd z;
  double sigma_logdet = 0.0;
  Index selected = 0;
  std::string selected_label;
  double v_minus = -kInf;
  double v_plus = kInf;
  double p_value = 1.0;
  double elapsed_ms = 0.0;  // wall time; diagnostic only, not serialized
};

struct NullCalibrationResult {
  std::vector<TrialReport> reports;
  double alpha = 0.05;
  double ks_distance = 0.0;
  double rejection_rate = 0.0;
};

struct PowerPoint {
  double delta = 0.0;
  double rejection_rate = 0.0;
  std::vector<TrialReport> reports;
};

struct RankingRow {
  std::string label;
  double mean_score = 0.0;
  double std_score = 0.0;
};

namespace detail {

template <typename Fn>
void guarded_trial(std::uint32_t trial, std::uint64_t seed, Fn&& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    throw InputError("trial " + std::to_string(trial) + " (seed " +
                     std::to_string(seed) + "): " + e.what());
  } catch (const std::exception& e) {
    throw NumericError("trial " + std::to_string(trial) + " (seed " +
                       std::to_string(seed) + "): " + e.what());
  }
}

struct StudyParams {
  Index n = 500;
  int r = 5;
  Index dim = 8;
  int trials = 1000;
  std::uint64_t seed = 1;
  Sidedness sided = Sidedness::OneSided;
  DesignMode design_mode = DesignMode::RandomWithoutReplacement;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// One full pipeline trial over the given model specs against a standard
// Gaussian real sample.
inline TrialReport run_trial(const std::vector<SyntheticModelSpec>& specs,
                             const std::vector<std::string>& labels,
                             const StudyParams& params, std::uint32_t trial) {
  const auto start = std::chrono::steady_clock::now();

  PhiloxStream real_rng(params.seed, stream_id(trial, stream_role::kReal));
  FeatureMatrix real =
      sample_standard_gaussian(params.n, params.dim, real_rng);

  std::vector<FeatureMatrix> models;
  models.reserve(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    PhiloxStream model_rng(
        params.seed,
        stream_id(trial, stream_role::kModelBase + static_cast<std::uint32_t>(s)));
    models.push_back(sample_model(specs[s], params.n, model_rng));
  }

  PhiloxStream bandwidth_rng(params.seed,
                             stream_id(trial, stream_role::kBandwidth));
  PhiloxStream design_rng(params.seed, stream_id(trial, stream_role::kDesign));

  PipelineConfig cfg;
  cfg.r = params.r;
  cfg.design_mode = params.design_mode;
  const PipelineResult pipeline =
      score_models(models, labels, real, cfg, bandwidth_rng, design_rng);
  const SelectionResult outcome =
      select_and_test(pipeline.scores, params.sided);

  TrialReport report;
  report.seed = params.seed;
  report.trial = trial;
  report.labels = labels;
  report.z = outcome.z;
  report.sigma_logdet = logdet_spd(pipeline.scores.sigma);
  report.selected = outcome.selected;
  report.selected_label = labels[static_cast<std::size_t>(outcome.selected)];
  report.v_minus = outcome.interval.lower;
  report.v_plus = outcome.interval.upper;
  report.p_value = outcome.p_value;
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

inline std::vector<TrialReport> run_trials(
    const std::vector<SyntheticModelSpec>& specs,
    const std::vector<std::string>& labels, const StudyParams& params) {
  if (params.trials < 1) throw InputError("study: trials must be >= 1");
  std::vector<TrialReport> reports(static_cast<std::size_t>(params.trials));
  parallel_for_blocks(
      static_cast<std::size_t>(params.trials), params.threads,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          const auto trial = static_cast<std::uint32_t>(t);
          guarded_trial(trial, params.seed, [&] {
            reports[t] = run_trial(specs, labels, params, trial);
          });
        }
      });
  return reports;
}

}  // namespace detail

// Null calibration: S "oracle" generators that sample the real distribution
// itself. Valid selective inference shows up as uniform p-values; the
// summary reports the KS distance to Uniform(0,1) and the fraction of
// p < alpha.
inline NullCalibrationResult run_null_calibration(
    int s_models, Index n, int r, Index dim, int trials, std::uint64_t seed,
    double alpha = 0.05, Sidedness sided = Sidedness::OneSided,
    DesignMode design_mode = DesignMode::RandomWithoutReplacement,
    unsigned threads = 0) {
  if (s_models < 2) {
    throw InputError("run_null_calibration: need at least two models");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InputError("run_null_calibration: alpha must lie in (0, 1)");
  }
  std::vector<SyntheticModelSpec> specs;
  std::vector<std::string> labels;
  for (int s = 0; s < s_models; ++s) {
    labels.push_back("oracle-" + std::to_string(s));
    specs.push_back(SyntheticModelSpec::mean_shift(0.0, dim, labels.back()));
  }

  detail::StudyParams params{n, r, dim, trials, seed, sided, design_mode,
                             threads};
  NullCalibrationResult result;
  result.alpha = alpha;
  result.reports = detail::run_trials(specs, labels, params);

  std::vector<double> p_values;
  p_values.reserve(result.reports.size());
  int rejections = 0;
  for (const auto& report : result.reports) {
    p_values.push_back(report.p_value);
    if (report.p_value < alpha) ++rejections;
  }
  result.ks_distance = uniform_ks_distance(std::move(p_values));
  result.rejection_rate =
      static_cast<double>(rejections) / static_cast<double>(trials);
  return result;
}

// Power study: every candidate is mean-shifted by the same delta, so the
// selected model is false whenever delta > 0. Trials reuse the same streams
// across deltas (common random numbers); delta = 0 therefore reproduces the
// null calibration bit for bit.
inline std::vector<PowerPoint> run_power_study(
    const std::vector<double>& deltas, int s_models, Index n, int r, Index dim,
    int trials, std::uint64_t seed, double alpha = 0.05,
    Sidedness sided = Sidedness::OneSided,
    DesignMode design_mode = DesignMode::RandomWithoutReplacement,
    unsigned threads = 0) {
  if (deltas.empty()) throw InputError("run_power_study: empty delta grid");
  for (double delta : deltas) {
    if (!(delta >= 0.0)) {
      throw InputError("run_power_study: deltas must be nonnegative");
    }
  }
  if (s_models < 2) {
    throw InputError("run_power_study: need at least two models");
  }

  std::vector<PowerPoint> points;
  points.reserve(deltas.size());
  for (double delta : deltas) {
    std::vector<SyntheticModelSpec> specs;
    std::vector<std::string> labels;
    for (int s = 0; s < s_models; ++s) {
      labels.push_back("shifted-" + std::to_string(s));
      specs.push_back(SyntheticModelSpec::mean_shift(delta, dim, labels.back()));
    }
    detail::StudyParams params{n, r, dim, trials, seed, sided, design_mode,
                               threads};
    PowerPoint point;
    point.delta = delta;
    point.reports = detail::run_trials(specs, labels, params);
    int rejections = 0;
    for (const auto& report : point.reports) {
      if (report.p_value < alpha) ++rejections;
    }
    point.rejection_rate =
        static_cast<double>(rejections) / static_cast<double>(trials);
    points.push_back(std::move(point));
  }
  return points;
}

// Ranking study: averages the incomplete-MMD^2 score of each candidate over
// independent trials and reports the table sorted by mean, ascending.
inline std::vector<RankingRow> run_ranking_study(
    const std::vector<SyntheticModelSpec>& specs, Index n, int r, Index dim,
    int trials, std::uint64_t seed,
    DesignMode design_mode = DesignMode::RandomWithoutReplacement,
    unsigned threads = 0) {
  if (specs.size() < 2) {
    throw InputError("run_ranking_study: need at least two model specs");
  }
  if (trials < 1) throw InputError("run_ranking_study: trials must be >= 1");
  std::vector<std::string> labels;
  for (const auto& spec : specs) {
    if (spec.dim != dim) {
      throw InputError("run_ranking_study: spec dim disagrees with study dim");
    }
    labels.push_back(spec.label.empty() ? "model-" + std::to_string(labels.size())
                                        : spec.label);
  }

  const std::size_t s_count = specs.size();
  Eigen::MatrixXd scores(trials, static_cast<Index>(s_count));
  detail::parallel_for_blocks(
      static_cast<std::size_t>(trials), threads,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          const auto trial = static_cast<std::uint32_t>(t);
          detail::guarded_trial(trial, seed, [&] {
            PhiloxStream real_rng(seed, stream_id(trial, stream_role::kReal));
            FeatureMatrix real = sample_standard_gaussian(n, dim, real_rng);
            std::vector<FeatureMatrix> models;
            models.reserve(s_count);
            for (std::size_t s = 0; s < s_count; ++s) {
              PhiloxStream model_rng(
                  seed, stream_id(trial, stream_role::kModelBase +
                                             static_cast<std::uint32_t>(s)));
              models.push_back(sample_model(specs[s], n, model_rng));
            }
            PhiloxStream bandwidth_rng(
                seed, stream_id(trial, stream_role::kBandwidth));
            PhiloxStream design_rng(seed,
                                    stream_id(trial, stream_role::kDesign));

            PipelineConfig cfg;
            cfg.r = r;
            cfg.design_mode = design_mode;
            const PipelineResult pipeline = score_models(
                models, labels, real, cfg, bandwidth_rng, design_rng);
            scores.row(static_cast<Index>(t)) = pipeline.scores.z.transpose();
          });
        }
      });

  std::vector<RankingRow> rows;
  rows.reserve(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    RankingRow row;
    row.label = labels[s];
    const Eigen::VectorXd column = scores.col(static_cast<Index>(s));
    row.mean_score = column.mean();
    if (trials > 1) {
      row.std_score = std::sqrt(
          (column.array() - row.mean_score).square().sum() /
          static_cast<double>(trials - 1));
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RankingRow& a, const RankingRow& b) {
                     return a.mean_score < b.mean_score;
                   });
  return rows;
}

}  // namespace mmdsel
