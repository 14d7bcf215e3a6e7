#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmdsel/errors.hpp"
#include "mmdsel/kernel.hpp"
#include "mmdsel/rng.hpp"

using mmdsel::FeatureMatrix;
using mmdsel::KernelSpec;
using mmdsel::kernel_eval;
using mmdsel::median_heuristic_gamma;

namespace {

Eigen::RowVectorXd vec(std::initializer_list<double> values) {
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double value : values) v[i++] = value;
  return v;
}

}  // namespace

TEST_CASE("gaussian kernel hand values", "[kernel]") {
  const KernelSpec unit = KernelSpec::gaussian(1.0);
  REQUIRE(kernel_eval(unit, vec({0.0}), vec({0.0})) == 1.0);
  REQUIRE_THAT(kernel_eval(unit, vec({0.0}), vec({1.0})),
               Catch::Matchers::WithinRel(std::exp(-1.0), 1e-14));
  const KernelSpec spec = KernelSpec::gaussian(0.125);
  REQUIRE_THAT(kernel_eval(spec, vec({0.0, 0.0}), vec({3.0, 4.0})),
               Catch::Matchers::WithinRel(std::exp(-3.125), 1e-14));
}

TEST_CASE("kernel is bit-symmetric and bounded", "[kernel]") {
  mmdsel::PhiloxStream rng(21, 0);
  const KernelSpec spec = KernelSpec::gaussian(0.7);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::RowVectorXd x(5), y(5);
    for (int i = 0; i < 5; ++i) {
      x[i] = 3.0 * rng.next_gaussian();
      y[i] = 3.0 * rng.next_gaussian();
    }
    const double k_xy = kernel_eval(spec, x, y);
    REQUIRE(k_xy == kernel_eval(spec, y, x));
    REQUIRE(k_xy > 0.0);
    REQUIRE(k_xy < 1.0);
    REQUIRE(kernel_eval(spec, x, x) == 1.0);
  }
}

TEST_CASE("kernel is non-increasing in gamma", "[kernel]") {
  const auto x = vec({0.3, -1.0});
  const auto y = vec({1.1, 0.4});
  double prev = 1.0;
  for (double gamma : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double k = kernel_eval(KernelSpec::gaussian(gamma), x, y);
    REQUIRE(k <= prev);
    prev = k;
  }
}

TEST_CASE("kernel input validation", "[kernel]") {
  const KernelSpec spec = KernelSpec::gaussian(1.0);
  REQUIRE_THROWS_AS(kernel_eval(spec, vec({0.0}), vec({0.0, 1.0})),
                    mmdsel::InputError);
  REQUIRE_THROWS_AS(
      kernel_eval(spec, vec({std::nan("")}), vec({0.0})),
      mmdsel::InputError);
  REQUIRE_THROWS_AS(KernelSpec::gaussian(0.0), mmdsel::InputError);
  REQUIRE_THROWS_AS(KernelSpec::gaussian(-1.0), mmdsel::InputError);
  REQUIRE_THROWS_AS(
      KernelSpec::gaussian(std::numeric_limits<double>::infinity()),
      mmdsel::InputError);
}

TEST_CASE("median heuristic hand cases", "[kernel]") {
  FeatureMatrix three(3, 1);
  three << 0.0, 1.0, 3.0;
  // distances {1, 2, 3}, median 2, gamma = 1/8
  REQUIRE_THAT(median_heuristic_gamma(three, 3, std::uint64_t{0}),
               Catch::Matchers::WithinRel(0.125, 1e-14));

  FeatureMatrix pair(2, 1);
  pair << 0.0, 2.0;
  REQUIRE_THAT(median_heuristic_gamma(pair, 2, std::uint64_t{0}),
               Catch::Matchers::WithinRel(0.125, 1e-14));
}

TEST_CASE("identical points are a degenerate-data error", "[kernel]") {
  FeatureMatrix same(3, 1);
  same << 5.0, 5.0, 5.0;
  REQUIRE_THROWS_AS(median_heuristic_gamma(same, 3, std::uint64_t{0}),
                    mmdsel::DegenerateDataError);
}

TEST_CASE("median heuristic ignores row order when nothing is subsampled",
          "[kernel]") {
  mmdsel::PhiloxStream rng(22, 0);
  FeatureMatrix m(40, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m(i / 3, i % 3) = rng.next_gaussian();
  }
  const double base = median_heuristic_gamma(m, 100, std::uint64_t{1});

  FeatureMatrix shuffled = m;
  std::vector<Eigen::Index> order(40);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::swap(order[i], order[i + rng.next_below(order.size() - i)]);
  }
  for (Eigen::Index i = 0; i < 40; ++i) {
    shuffled.row(i) = m.row(order[static_cast<std::size_t>(i)]);
  }
  REQUIRE(median_heuristic_gamma(shuffled, 100, std::uint64_t{99}) == base);
}

TEST_CASE("subsampled median heuristic is deterministic by seed", "[kernel]") {
  mmdsel::PhiloxStream rng(23, 0);
  FeatureMatrix m(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    m(i, 0) = rng.next_gaussian();
    m(i, 1) = rng.next_gaussian();
  }
  const double a = median_heuristic_gamma(m, 50, std::uint64_t{7});
  const double b = median_heuristic_gamma(m, 50, std::uint64_t{7});
  REQUIRE(a == b);
  REQUIRE(a > 0.0);
}
