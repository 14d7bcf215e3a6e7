// Command-line front end: compares candidate generative models against a
// real sample set with the incomplete-U-statistic MMD estimator, selects the
// lowest-discrepancy model, and reports a selective p-value that stays valid
// after the data-driven selection.
//
// Exit codes: 0 analysis completed, 2 input/parse error, 3 numerical or
// degeneracy failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mmdsel/io.hpp"
#include "mmdsel/mmd.hpp"
#include "mmdsel/psi.hpp"
#include "mmdsel/reduce.hpp"
#include "mmdsel/simulate.hpp"

namespace {

using mmdsel::Index;
using mmdsel::Record;

std::string fmt(double v) { return mmdsel::detail::shortest_double(v); }

std::string fmt_extended(double v) {
  if (std::isfinite(v)) return fmt(v);
  return v > 0 ? "inf" : "-inf";
}

mmdsel::DesignMode parse_design(const std::string& name) {
  if (name == "random") return mmdsel::DesignMode::RandomWithoutReplacement;
  if (name == "linear") return mmdsel::DesignMode::Linear;
  if (name == "full") return mmdsel::DesignMode::Full;
  throw mmdsel::InputError("unknown design mode '" + name +
                           "' (expected random, linear, or full)");
}

mmdsel::Sidedness parse_sided(const std::string& name) {
  if (name == "one") return mmdsel::Sidedness::OneSided;
  if (name == "two") return mmdsel::Sidedness::TwoSided;
  throw mmdsel::InputError("unknown sidedness '" + name +
                           "' (expected one or two)");
}

std::vector<double> parse_grid(const std::string& text, const char* flag) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::size_t end = comma == std::string::npos ? text.size() : comma;
    double v = 0.0;
    const auto res = std::from_chars(text.data() + pos, text.data() + end, v);
    if (res.ec != std::errc{} || res.ptr != text.data() + end) {
      throw mmdsel::InputError(std::string(flag) +
                               ": expected a comma-separated list of numbers");
    }
    values.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (values.empty()) {
    throw mmdsel::InputError(std::string(flag) + ": empty list");
  }
  return values;
}

struct CommonOptions {
  std::string manifest;
  double alpha = 0.05;
  int r = 5;
  std::string design = "random";
  std::uint64_t seed = 1;
  double gamma = 0.0;  // 0 = derive from the data
  std::string sided = "one";
  std::string out;
};

mmdsel::PipelineConfig pipeline_config(const CommonOptions& opts,
                                       unsigned threads) {
  mmdsel::PipelineConfig cfg;
  cfg.r = opts.r;
  cfg.design_mode = parse_design(opts.design);
  if (opts.gamma != 0.0) cfg.gamma_override = opts.gamma;
  cfg.threads = threads;
  return cfg;
}

Record params_record(const CommonOptions& opts) {
  Record rec;
  rec["alpha"] = opts.alpha;
  rec["r"] = opts.r;
  rec["design"] = opts.design;
  rec["seed"] = opts.seed;
  rec["sided"] = opts.sided;
  return rec;
}

void write_out(const std::string& path, const std::vector<Record>& records) {
  if (!path.empty()) {
    mmdsel::write_records(path, records);
  }
}

// --- score -----------------------------------------------------------------

int run_score(const CommonOptions& opts) {
  const mmdsel::DatasetManifest manifest = mmdsel::load_manifest(opts.manifest);
  const mmdsel::LoadedDataset data = mmdsel::load_dataset(manifest);
  const auto threads = std::thread::hardware_concurrency();

  mmdsel::PhiloxStream bandwidth_rng(
      opts.seed, mmdsel::stream_id(0, mmdsel::stream_role::kBandwidth));
  mmdsel::PhiloxStream design_rng(
      opts.seed, mmdsel::stream_id(0, mmdsel::stream_role::kDesign));
  const mmdsel::HPipeline pipeline =
      mmdsel::build_h_pipeline(data.models, data.real,
                               pipeline_config(opts, threads), bandwidth_rng,
                               design_rng);

  const Eigen::VectorXd z = mmdsel::mmd_incomplete(pipeline.h);
  const Index ell = pipeline.h.design.size();

  // Standard errors come from the full covariance estimate when it exists;
  // a degenerate cross-model covariance (duplicated model files) downgrades
  // to per-column variances with a warning instead of refusing to score.
  Eigen::VectorXd std_err(z.size());
  if (z.size() >= 2) {
    try {
      const mmdsel::ScoreVector scores =
          mmdsel::estimate_scores(pipeline.h, 1e-8, data.labels);
      std_err = scores.sigma.diagonal().cwiseSqrt();
    } catch (const mmdsel::DegenerateCovarianceError& e) {
      std::cerr << "warning: " << e.what() << "\n";
      for (Index s = 0; s < z.size(); ++s) {
        const auto col = pipeline.h.values.col(s);
        const double var =
            (col.array() - z[s]).square().sum() /
            static_cast<double>(ell - 1) / static_cast<double>(ell);
        std_err[s] = std::sqrt(var);
      }
    }
  } else {
    const auto col = pipeline.h.values.col(0);
    const double var = (col.array() - z[0]).square().sum() /
                       static_cast<double>(ell - 1) /
                       static_cast<double>(ell);
    std_err[0] = std::sqrt(var);
  }

  std::vector<Index> order(static_cast<std::size_t>(z.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return z[a] < z[b]; });

  std::ostringstream table;
  table << "# label\tmmd2_inc\tstd_err\n";
  for (Index s : order) {
    table << data.labels[static_cast<std::size_t>(s)] << '\t' << fmt(z[s])
          << '\t' << fmt(std_err[s]) << '\n';
  }
  std::cout << table.str();

  std::vector<Record> records;
  for (Index s : order) {
    Record rec;
    rec["type"] = "score";
    rec["label"] = data.labels[static_cast<std::size_t>(s)];
    rec["mmd2"] = z[s];
    rec["std_err"] = std_err[s];
    records.push_back(std::move(rec));
  }
  Record summary;
  summary["type"] = "summary";
  summary["command"] = "score";
  summary["gamma"] = pipeline.gamma;
  summary["ell"] = ell;
  summary["n"] = data.real.rows();
  summary["d"] = data.real.cols();
  summary["params"] = params_record(opts);
  records.push_back(std::move(summary));
  write_out(opts.out, records);
  return 0;
}

// --- select-test -------------------------------------------------------------

int run_select_test(const CommonOptions& opts) {
  const mmdsel::DatasetManifest manifest = mmdsel::load_manifest(opts.manifest);
  const mmdsel::LoadedDataset data = mmdsel::load_dataset(manifest);
  if (data.models.size() < 2) {
    throw mmdsel::InputError("selection requires at least two models");
  }
  const auto threads = std::thread::hardware_concurrency();

  mmdsel::PhiloxStream bandwidth_rng(
      opts.seed, mmdsel::stream_id(0, mmdsel::stream_role::kBandwidth));
  mmdsel::PhiloxStream design_rng(
      opts.seed, mmdsel::stream_id(0, mmdsel::stream_role::kDesign));
  const mmdsel::PipelineResult pipeline =
      mmdsel::score_models(data.models, data.labels, data.real,
                           pipeline_config(opts, threads), bandwidth_rng,
                           design_rng);
  const mmdsel::SelectionResult outcome =
      mmdsel::select_and_test(pipeline.scores, parse_sided(opts.sided));

  const std::string selected_label =
      data.labels[static_cast<std::size_t>(outcome.selected)];
  const bool reject = outcome.p_value < opts.alpha;

  std::ostringstream text;
  text << "selected: " << selected_label << '\n';
  text << "z:";
  for (Index s = 0; s < outcome.z.size(); ++s) {
    text << ' ' << data.labels[static_cast<std::size_t>(s)] << '='
         << fmt(outcome.z[s]);
  }
  text << '\n';
  text << "interval: [" << fmt_extended(outcome.interval.lower) << ", "
       << fmt_extended(outcome.interval.upper) << "]\n";
  text << "p-value: " << fmt(outcome.p_value) << '\n';
  if (reject) {
    text << "decision: reject H0 at alpha=" << fmt(opts.alpha) << '\n';
  } else {
    text << "decision: fail to reject H0 at alpha=" << fmt(opts.alpha)
         << " (no evidence of difference at level " << fmt(opts.alpha)
         << ")\n";
  }
  std::cout << text.str();

  mmdsel::TrialReport report;
  report.seed = opts.seed;
  report.trial = 0;
  report.labels = data.labels;
  report.z = outcome.z;
  report.sigma_logdet = mmdsel::detail::logdet_spd(pipeline.scores.sigma);
  report.selected = outcome.selected;
  report.selected_label = selected_label;
  report.v_minus = outcome.interval.lower;
  report.v_plus = outcome.interval.upper;
  report.p_value = outcome.p_value;

  std::vector<Record> records;
  records.push_back(mmdsel::trial_record(report));
  Record summary;
  summary["type"] = "summary";
  summary["command"] = "select-test";
  summary["selected"] = selected_label;
  summary["p_value"] = outcome.p_value;
  summary["decision"] = reject ? "reject" : "fail-to-reject";
  summary["gamma"] = pipeline.gamma;
  summary["ell"] = pipeline.ell;
  summary["params"] = params_record(opts);
  records.push_back(std::move(summary));
  write_out(opts.out, records);
  return 0;
}

// --- studies -----------------------------------------------------------------

struct StudyOptions {
  int models = 7;
  Index n = 500;
  Index dim = 8;
  int trials = 0;  // per-command default
  unsigned threads = 0;
};

int run_calibrate(const CommonOptions& opts, const StudyOptions& study) {
  const mmdsel::NullCalibrationResult result = mmdsel::run_null_calibration(
      study.models, study.n, opts.r, study.dim, study.trials, opts.seed,
      opts.alpha, parse_sided(opts.sided), parse_design(opts.design),
      study.threads);

  std::cout << "trials=" << study.trials << " alpha=" << fmt(opts.alpha)
            << " ks_distance=" << fmt(result.ks_distance)
            << " rejection_rate=" << fmt(result.rejection_rate) << '\n';

  if (!opts.out.empty()) {
    Record summary;
    summary["type"] = "summary";
    summary["command"] = "calibrate";
    summary["trials"] = study.trials;
    summary["models"] = study.models;
    summary["n"] = study.n;
    summary["dim"] = study.dim;
    summary["ks_distance"] = result.ks_distance;
    summary["rejection_rate"] = result.rejection_rate;
    summary["p_hist"] = mmdsel::p_value_histogram(result.reports);
    summary["params"] = params_record(opts);
    mmdsel::write_report(opts.out, result.reports, summary);
  }
  return 0;
}

int run_power(const CommonOptions& opts, const StudyOptions& study,
              const std::string& deltas_text) {
  const std::vector<double> deltas = parse_grid(deltas_text, "--deltas");
  const std::vector<mmdsel::PowerPoint> points = mmdsel::run_power_study(
      deltas, study.models, study.n, opts.r, study.dim, study.trials,
      opts.seed, opts.alpha, parse_sided(opts.sided),
      parse_design(opts.design), study.threads);

  for (const auto& point : points) {
    std::cout << "delta=" << fmt(point.delta)
              << " rejection_rate=" << fmt(point.rejection_rate) << '\n';
  }

  if (!opts.out.empty()) {
    std::vector<Record> records;
    Record rates = Record::array();
    Record grid = Record::array();
    for (const auto& point : points) {
      for (const auto& report : point.reports) {
        Record rec = mmdsel::trial_record(report);
        rec["delta"] = point.delta;
        records.push_back(std::move(rec));
      }
      grid.push_back(point.delta);
      rates.push_back(point.rejection_rate);
    }
    Record summary;
    summary["type"] = "summary";
    summary["command"] = "power";
    summary["trials"] = study.trials;
    summary["models"] = study.models;
    summary["n"] = study.n;
    summary["dim"] = study.dim;
    summary["deltas"] = grid;
    summary["rejection_rates"] = rates;
    summary["params"] = params_record(opts);
    records.push_back(std::move(summary));
    mmdsel::write_records(opts.out, records);
  }
  return 0;
}

int run_ranking(const CommonOptions& opts, const StudyOptions& study,
                const std::string& shifts_text) {
  const std::vector<double> shifts = parse_grid(shifts_text, "--shifts");
  std::vector<mmdsel::SyntheticModelSpec> specs;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    std::string label = "shift-" + fmt(shifts[i]);
    for (std::size_t j = 0; j < i; ++j) {
      if (specs[j].label == label) {
        label += "#" + std::to_string(i);
        break;
      }
    }
    specs.push_back(
        mmdsel::SyntheticModelSpec::mean_shift(shifts[i], study.dim, label));
  }

  const std::vector<mmdsel::RankingRow> rows = mmdsel::run_ranking_study(
      specs, study.n, opts.r, study.dim, study.trials, opts.seed,
      parse_design(opts.design), study.threads);

  std::cout << "# label\tmean_mmd2\tstd_mmd2\n";
  for (const auto& row : rows) {
    std::cout << row.label << '\t' << fmt(row.mean_score) << '\t'
              << fmt(row.std_score) << '\n';
  }

  if (!opts.out.empty()) {
    std::vector<Record> records;
    for (const auto& row : rows) {
      Record rec;
      rec["type"] = "ranking";
      rec["label"] = row.label;
      rec["mean_mmd2"] = row.mean_score;
      rec["std_mmd2"] = row.std_score;
      records.push_back(std::move(rec));
    }
    Record summary;
    summary["type"] = "summary";
    summary["command"] = "ranking";
    summary["trials"] = study.trials;
    summary["n"] = study.n;
    summary["dim"] = study.dim;
    summary["params"] = params_record(opts);
    records.push_back(std::move(summary));
    mmdsel::write_records(opts.out, records);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mmdsel: compare generative models with incomplete-U-statistic MMD and "
      "report selective p-values"};
  app.require_subcommand(1);

  CommonOptions opts;
  StudyOptions study;
  std::string deltas_text = "0,0.1,0.5";
  std::string shifts_text = "0,0.2,0.5";

  auto add_common = [&](CLI::App* cmd, bool with_manifest) {
    if (with_manifest) {
      cmd->add_option("--manifest", opts.manifest, "dataset manifest file")
          ->required();
    }
    cmd->add_option("--alpha", opts.alpha, "significance level in (0,1)")
        ->check(CLI::Range(1e-12, 1.0 - 1e-12));
    cmd->add_option("--r", opts.r, "design size multiplier, ell = r*n")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--design", opts.design, "pair design: random|linear|full");
    cmd->add_option("--seed", opts.seed, "master RNG seed");
    cmd->add_option("--gamma", opts.gamma,
                    "Gaussian kernel bandwidth override (default: median "
                    "heuristic)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--sided", opts.sided, "p-value sidedness: one|two");
    cmd->add_option("--out", opts.out, "report file (one JSON record per line)");
  };
  auto add_study = [&](CLI::App* cmd, int default_trials) {
    cmd->add_option("--models", study.models, "number of candidate models")
        ->check(CLI::Range(2, 1000));
    cmd->add_option("--n", study.n, "samples per set")->check(CLI::PositiveNumber);
    cmd->add_option("--dim", study.dim, "feature dimension")
        ->check(CLI::PositiveNumber);
    study.trials = default_trials;
    cmd->add_option("--trials", study.trials, "number of trials")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--threads", study.threads,
                    "worker threads (0 = hardware)");
  };

  CLI::App* score = app.add_subcommand(
      "score", "score every model against the real sample");
  add_common(score, true);
  CLI::App* select_test = app.add_subcommand(
      "select-test",
      "select the lowest-score model and test it with a selective p-value");
  add_common(select_test, true);
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "null calibration with oracle generators (synthetic)");
  add_common(calibrate, false);
  add_study(calibrate, 1000);
  CLI::App* power = app.add_subcommand(
      "power", "rejection rate across a grid of mean shifts (synthetic)");
  add_common(power, false);
  add_study(power, 200);
  power->add_option("--deltas", deltas_text,
                    "comma-separated mean-shift grid");
  CLI::App* ranking = app.add_subcommand(
      "ranking", "average scores of shifted synthetic models");
  add_common(ranking, false);
  add_study(ranking, 100);
  ranking->add_option("--shifts", shifts_text,
                      "comma-separated mean shifts, one model each");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (score->parsed()) return run_score(opts);
    if (select_test->parsed()) return run_select_test(opts);
    if (calibrate->parsed()) return run_calibrate(opts, study);
    if (power->parsed()) return run_power(opts, study, deltas_text);
    if (ranking->parsed()) return run_ranking(opts, study, shifts_text);
  } catch (const mmdsel::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const mmdsel::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
