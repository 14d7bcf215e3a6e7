#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "mmdsel/errors.hpp"
#include "mmdsel/mmd.hpp"
#include "mmdsel/reduce.hpp"
#include "mmdsel/rng.hpp"

using mmdsel::DesignMode;
using mmdsel::FeatureMatrix;
using mmdsel::HMatrix;
using mmdsel::Index;
using mmdsel::KernelSpec;
using mmdsel::PairDesign;
using mmdsel::PhiloxStream;

namespace {

FeatureMatrix gaussian_matrix(Index n, Index d, std::uint64_t seed,
                              std::uint64_t stream) {
  PhiloxStream rng(seed, stream);
  FeatureMatrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = rng.next_gaussian();
  }
  return m;
}

Eigen::RowVectorXd vec1(double v) {
  Eigen::RowVectorXd out(1);
  out << v;
  return out;
}

}  // namespace

TEST_CASE("h kernel hand values and exact pair symmetry", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(1.0);
  // Paired identical samples cancel.
  REQUIRE(mmdsel::h_kernel(spec, vec1(0), vec1(0), vec1(1), vec1(1)) == 0.0);

  const double h =
      mmdsel::h_kernel(spec, vec1(0), vec1(1), vec1(0), vec1(1));
  REQUIRE_THAT(h, Catch::Matchers::WithinRel(2.0 - 2.0 * std::exp(-1.0), 1e-14));

  // Swapping (x, y) with (x2, y2) gives the identical bits.
  mmdsel::PhiloxStream rng(31, 0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::RowVectorXd x(3), y(3), x2(3), y2(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = rng.next_gaussian();
      y[i] = rng.next_gaussian();
      x2[i] = rng.next_gaussian();
      y2[i] = rng.next_gaussian();
    }
    REQUIRE(mmdsel::h_kernel(spec, x, y, x2, y2) ==
            mmdsel::h_kernel(spec, x2, y2, x, y));
  }

  REQUIRE_THROWS_AS(
      mmdsel::h_kernel(spec, vec1(0), vec1(0), vec1(0),
                       Eigen::RowVectorXd::Zero(2)),
      mmdsel::InputError);
}

TEST_CASE("linear design enumerates adjacent pairs", "[mmd]") {
  const PairDesign d4 = mmdsel::sample_design(4, 0, DesignMode::Linear, 0);
  REQUIRE(d4.pairs == std::vector<std::pair<Index, Index>>{{0, 1}, {2, 3}});
  // Odd n leaves the last sample unused.
  const PairDesign d5 = mmdsel::sample_design(5, 0, DesignMode::Linear, 0);
  REQUIRE(d5.pairs == std::vector<std::pair<Index, Index>>{{0, 1}, {2, 3}});
}

TEST_CASE("full design enumerates all ordered pairs", "[mmd]") {
  const PairDesign d = mmdsel::sample_design(3, 0, DesignMode::Full, 0);
  REQUIRE(d.size() == 6);
  const std::set<std::pair<Index, Index>> expected{{0, 1}, {0, 2}, {1, 0},
                                                   {1, 2}, {2, 0}, {2, 1}};
  REQUIRE(std::set<std::pair<Index, Index>>(d.pairs.begin(), d.pairs.end()) ==
          expected);
}

TEST_CASE("random design: deterministic, deduplicated, oriented", "[mmd]") {
  const PairDesign a = mmdsel::sample_design(
      100, 500, DesignMode::RandomWithoutReplacement, 7);
  const PairDesign b = mmdsel::sample_design(
      100, 500, DesignMode::RandomWithoutReplacement, 7);
  REQUIRE(a.pairs == b.pairs);
  REQUIRE(a.size() == 500);

  std::set<std::pair<Index, Index>> unordered;
  for (const auto& [i, j] : a.pairs) {
    REQUIRE(i < j);  // oriented as (min, max)
    REQUIRE(j < 100);
    unordered.insert({i, j});
  }
  REQUIRE(unordered.size() == 500);  // no duplicate unordered pairs
}

TEST_CASE("random design rejects an oversized ell", "[mmd]") {
  REQUIRE_THROWS_AS(
      mmdsel::sample_design(4, 7, DesignMode::RandomWithoutReplacement, 1),
      mmdsel::InputError);
  // ell equal to the number of distinct unordered pairs is fine.
  const PairDesign full = mmdsel::sample_design(
      4, 6, DesignMode::RandomWithoutReplacement, 1);
  REQUIRE(full.size() == 6);
}

TEST_CASE("h matrix: paired identical samples give exact zeros", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.5);
  const FeatureMatrix x = gaussian_matrix(12, 3, 41, 0);
  const PairDesign design = mmdsel::sample_design(12, 0, DesignMode::Full, 0);
  const HMatrix h = mmdsel::compute_h_matrix(spec, {x}, x, design);
  REQUIRE(h.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("h matrix: duplicate models produce identical columns", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.5);
  const FeatureMatrix x = gaussian_matrix(10, 2, 42, 0);
  const FeatureMatrix y = gaussian_matrix(10, 2, 42, 1);
  const PairDesign design = mmdsel::sample_design(
      10, 20, DesignMode::RandomWithoutReplacement, 3);
  const HMatrix h = mmdsel::compute_h_matrix(spec, {x, x}, y, design);
  REQUIRE(h.values.col(0) == h.values.col(1));
}

TEST_CASE("h matrix hand value for the two-point configuration", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(1.0);
  FeatureMatrix x(2, 1), y(2, 1);
  x << 0.0, 0.0;
  y << 1.0, 1.0;
  const PairDesign design = mmdsel::sample_design(2, 0, DesignMode::Full, 0);
  const HMatrix h = mmdsel::compute_h_matrix(spec, {x}, y, design);
  const double expected = 2.0 - 2.0 * std::exp(-1.0);
  for (Index p = 0; p < h.values.rows(); ++p) {
    REQUIRE_THAT(h.values(p, 0), Catch::Matchers::WithinRel(expected, 1e-14));
  }
  REQUIRE_THAT(mmdsel::mmd_incomplete(h)[0],
               Catch::Matchers::WithinRel(expected, 1e-14));
}

TEST_CASE("h matrix validates shapes and design", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(1.0);
  const FeatureMatrix x = gaussian_matrix(8, 2, 43, 0);
  const FeatureMatrix y = gaussian_matrix(8, 2, 43, 1);
  const FeatureMatrix short_x = gaussian_matrix(6, 2, 43, 2);
  const PairDesign design = mmdsel::sample_design(8, 0, DesignMode::Linear, 0);
  REQUIRE_THROWS_AS(mmdsel::compute_h_matrix(spec, {short_x}, y, design),
                    mmdsel::InputError);
  const PairDesign wrong_n = mmdsel::sample_design(6, 0, DesignMode::Linear, 0);
  REQUIRE_THROWS_AS(mmdsel::compute_h_matrix(spec, {x}, y, wrong_n),
                    mmdsel::InputError);
}

TEST_CASE("parallel h matrix equals the serial one bit for bit", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.2);
  const FeatureMatrix x = gaussian_matrix(60, 4, 44, 0);
  const FeatureMatrix y = gaussian_matrix(60, 4, 44, 1);
  const PairDesign design = mmdsel::sample_design(
      60, 300, DesignMode::RandomWithoutReplacement, 5);
  const HMatrix serial = mmdsel::compute_h_matrix(spec, {x}, y, design, 1);
  const HMatrix parallel = mmdsel::compute_h_matrix(spec, {x}, y, design, 4);
  REQUIRE(serial.values == parallel.values);
  REQUIRE(mmdsel::mmd_incomplete(serial) == mmdsel::mmd_incomplete(parallel));
}

TEST_CASE("complete estimator: identical paired samples give exactly zero",
          "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.8);
  const FeatureMatrix x = gaussian_matrix(15, 3, 45, 0);
  REQUIRE(mmdsel::mmd_complete(spec, x, x) == 0.0);
}

TEST_CASE("complete estimator hand value", "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(1.0);
  FeatureMatrix x(2, 1), y(2, 1);
  x << 0.0, 0.0;
  y << 1.0, 1.0;
  REQUIRE_THAT(mmdsel::mmd_complete(spec, x, y),
               Catch::Matchers::WithinRel(2.0 - 2.0 * std::exp(-1.0), 1e-14));
  REQUIRE_THROWS_AS(
      mmdsel::mmd_complete(spec, x, gaussian_matrix(3, 1, 46, 0)),
      mmdsel::InputError);
}

TEST_CASE("complete estimator is invariant to relabeling the sample pairs",
          "[mmd]") {
  // The estimator is a U-statistic over the paired vectors u_i = (x_i, y_i);
  // any permutation applied jointly to the rows of X and Y is a relabeling
  // of the u_i and leaves the value unchanged (up to summation order).
  const KernelSpec spec = KernelSpec::gaussian(0.4);
  const FeatureMatrix x = gaussian_matrix(20, 3, 47, 0);
  const FeatureMatrix y = gaussian_matrix(20, 3, 47, 1);
  const double base = mmdsel::mmd_complete(spec, x, y);

  PhiloxStream rng(47, 2);
  FeatureMatrix xp(20, 3), yp(20, 3);
  std::vector<Index> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i + 1 < 20; ++i) {
    std::swap(perm[i], perm[i + rng.next_below(20 - i)]);
  }
  for (Index i = 0; i < 20; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
  }
  REQUIRE_THAT(mmdsel::mmd_complete(spec, xp, yp),
               Catch::Matchers::WithinRel(base, 1e-12));
}

TEST_CASE("full-design incomplete estimator matches the complete oracle",
          "[mmd]") {
  PhiloxStream meta(48, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 5 + static_cast<Index>(meta.next_below(30));
    const Index d = 1 + static_cast<Index>(meta.next_below(4));
    const FeatureMatrix x =
        (gaussian_matrix(n, d, 480 + rep, 0).array() + 0.5).matrix();
    const FeatureMatrix y = gaussian_matrix(n, d, 480 + rep, 1);
    const KernelSpec spec = KernelSpec::gaussian(0.05 + meta.next_unit());
    const PairDesign full = mmdsel::sample_design(n, 0, DesignMode::Full, 0);
    const HMatrix h = mmdsel::compute_h_matrix(spec, {x}, y, full);
    const double incomplete = mmdsel::mmd_incomplete(h)[0];
    const double complete = mmdsel::mmd_complete(spec, x, y);
    REQUIRE_THAT(incomplete, Catch::Matchers::WithinRel(complete, 1e-12));
  }
}

TEST_CASE("complete estimator is near zero for equal distributions", "[mmd]") {
  const Index n = 2000;
  const FeatureMatrix x = gaussian_matrix(n, 1, 49, 0);
  const FeatureMatrix y = gaussian_matrix(n, 1, 49, 1);
  const KernelSpec spec = KernelSpec::gaussian(0.25);
  REQUIRE(std::abs(mmdsel::mmd_complete(spec, x, y)) < 0.01);
}

TEST_CASE("score estimation: z equals the deterministic column means",
          "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.3);
  const FeatureMatrix y = gaussian_matrix(40, 2, 50, 0);
  const FeatureMatrix x0 = gaussian_matrix(40, 2, 50, 1);
  const FeatureMatrix x1 =
      (gaussian_matrix(40, 2, 50, 2).array() + 0.4).matrix();
  const PairDesign design = mmdsel::sample_design(
      40, 200, DesignMode::RandomWithoutReplacement, 9);
  const HMatrix h = mmdsel::compute_h_matrix(spec, {x0, x1}, y, design);
  const mmdsel::ScoreVector scores = mmdsel::estimate_scores(h);
  for (Index s = 0; s < 2; ++s) {
    REQUIRE(scores.z[s] ==
            mmdsel::pairwise_sum(h.values.col(s).data(), 200) / 200.0);
  }
  REQUIRE(scores.model_ids == std::vector<std::string>{"model-0", "model-1"});

  // Covariance is symmetric positive definite.
  REQUIRE(scores.sigma == scores.sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scores.sigma);
  REQUIRE(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("score covariance converges to the row covariance over ell",
          "[mmd]") {
  // Rows with known covariance C = [[1, 0.5], [0.5, 1]].
  const Index ell = 40000;
  HMatrix h;
  h.values.resize(ell, 2);
  PhiloxStream rng(51, 0);
  const double mix = std::sqrt(0.75);
  for (Index p = 0; p < ell; ++p) {
    const double g1 = rng.next_gaussian();
    const double g2 = rng.next_gaussian();
    h.values(p, 0) = g1;
    h.values(p, 1) = 0.5 * g1 + mix * g2;
  }
  const mmdsel::ScoreVector scores = mmdsel::estimate_scores(h);
  const Eigen::MatrixXd scaled = scores.sigma * static_cast<double>(ell);
  REQUIRE_THAT(scaled(0, 0), Catch::Matchers::WithinAbs(1.0, 0.05));
  REQUIRE_THAT(scaled(1, 1), Catch::Matchers::WithinAbs(1.0, 0.05));
  REQUIRE_THAT(scaled(0, 1), Catch::Matchers::WithinAbs(0.5, 0.05));
}

TEST_CASE("constant columns are a degenerate-covariance error", "[mmd]") {
  HMatrix h;
  h.values = Eigen::MatrixXd::Constant(10, 2, 0.25);
  REQUIRE_THROWS_AS(mmdsel::estimate_scores(h),
                    mmdsel::DegenerateCovarianceError);
}

TEST_CASE("duplicated models are reported with the offending columns",
          "[mmd]") {
  const KernelSpec spec = KernelSpec::gaussian(0.3);
  const FeatureMatrix y = gaussian_matrix(30, 2, 52, 0);
  const FeatureMatrix x = gaussian_matrix(30, 2, 52, 1);
  const PairDesign design = mmdsel::sample_design(
      30, 120, DesignMode::RandomWithoutReplacement, 2);
  const HMatrix h =
      mmdsel::compute_h_matrix(spec, {x, x}, y, design);
  try {
    mmdsel::estimate_scores(h, 1e-8, {"alpha", "beta"});
    FAIL("expected DegenerateCovarianceError");
  } catch (const mmdsel::DegenerateCovarianceError& e) {
    const std::string what = e.what();
    REQUIRE(what.find("alpha") != std::string::npos);
    REQUIRE(what.find("beta") != std::string::npos);
  }
}

TEST_CASE("score estimation input contracts", "[mmd]") {
  HMatrix h;
  h.values = Eigen::MatrixXd::Random(1, 2);
  REQUIRE_THROWS_AS(mmdsel::estimate_scores(h), mmdsel::InputError);
  h.values = Eigen::MatrixXd::Random(10, 1);
  REQUIRE_THROWS_AS(mmdsel::estimate_scores(h), mmdsel::InputError);
  h.values = Eigen::MatrixXd::Random(10, 2);
  REQUIRE_THROWS_AS(mmdsel::estimate_scores(h, -1.0), mmdsel::InputError);
}
