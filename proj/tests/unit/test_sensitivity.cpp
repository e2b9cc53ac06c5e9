#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include "hbiuq/config.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/sensitivity.hpp"

using namespace hbiuq;

namespace {

VectorFunction additive(std::vector<double> w) {
  return [w](std::span<const double> x) {
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return Eigen::VectorXd::Constant(1, s);
  };
}

}  // namespace

TEST_CASE("screening drops an ignored input") {
  VectorFunction f = [](std::span<const double> x) { return Eigen::VectorXd::Constant(1, x[0]); };
  std::vector<Bounds> b(2, Bounds{0, 5});
  Rng rng(1);
  auto r = oat_screen(f, b, {}, 50, 1e-3, rng, {"x1", "x2"});
  CHECK(r.variance[1] == 0.0);
  CHECK_FALSE(r.selected[1]);
  CHECK(r.selected[0]);
  CHECK(r.selected_indices() == std::vector<std::size_t>{0});
  CHECK(r.sweep_size == 50);
}

TEST_CASE("screening defaults follow the published setup") {
  SensitivitySettings s;
  CHECK(s.screen_samples == 50);
  CHECK(s.threshold == 1e-3);
}

TEST_CASE("screening variance of a sum of uniforms") {
  std::vector<Bounds> b(3, Bounds{0, 1});
  Rng rng(2);
  const std::size_t n = 2000;
  auto r = oat_screen(additive({1, 1, 1}), b, {}, n, 1e-3, rng);
  // Sample variance of U(0,1): se^2 = (mu4 - sigma^4 (n-3)/(n-1)) / n.
  const double se = std::sqrt((1.0 / 80 - (1.0 / 144) * (n - 3.0) / (n - 1.0)) / n);
  for (double v : r.variance) CHECK(std::abs(v - 1.0 / 12) < 4 * se);
}

TEST_CASE("property: selection agrees with the threshold") {
  Rng rng(3);
  std::vector<Bounds> b(5, Bounds{0, 5});
  auto r = oat_screen(additive({1, 0.01, 0.001, 0.1, 0}), b, {}, 50, 1e-3, rng);
  for (std::size_t i = 0; i < 5; ++i) CHECK(r.selected[i] == (r.variance[i] > r.threshold));
  CHECK(r.variance[4] == 0.0);
}

TEST_CASE("Sobol indices of an additive function") {
  std::vector<Bounds> b(2, Bounds{0, 1});
  Rng rng(4);
  auto r = sobol_indices(additive({1, 1}), b, 4096, rng);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(r.s1(i, 0) - 0.5) < 0.05);
    CHECK(std::abs(r.st(i, 0) - 0.5) < 0.05);
  }
  CHECK(r.evaluations == 4096 * 4);
}

TEST_CASE("Sobol indices of a pure interaction") {
  VectorFunction f = [](std::span<const double> x) { return Eigen::VectorXd::Constant(1, x[0] * x[1]); };
  std::vector<Bounds> b(2, Bounds{-1, 1});
  Rng rng(5);
  auto r = sobol_indices(f, b, 4096, rng);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(r.s1(i, 0)) < 0.05);
    CHECK(std::abs(r.st(i, 0) - 1.0) < 0.05);
  }
}

TEST_CASE("Sobol on a constant output") {
  VectorFunction f = [](std::span<const double>) { return Eigen::VectorXd::Constant(1, 2.0); };
  std::vector<Bounds> b(2, Bounds{0, 1});
  Rng rng(6);
  CHECK_THROWS_AS(sobol_indices(f, b, 200, rng), ZeroVarianceError);
}

TEST_CASE("Sobol evaluation count is N(d+2)") {
  std::atomic<std::size_t> calls{0};
  VectorFunction f = [&](std::span<const double> x) {
    calls++;
    return Eigen::VectorXd::Constant(1, x[0] + 2 * x[1] + x[2] * x[3]);
  };
  std::vector<Bounds> b(4, Bounds{0, 1});
  Rng rng(7);
  auto r = sobol_indices(f, b, 1000, rng, 50);
  CHECK(calls.load() == 6000);
  CHECK(r.evaluations == 6000);
}

TEST_CASE("property: additive functions, index bounds and ordering") {
  // Jansen's first-order spread grows with d, so N grows with d (never below 4096).
  Rng rng(8);
  int checks = 0, violations = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 4);
    const auto n = static_cast<std::size_t>(4096 * std::max(1.0, std::pow(d / 2.0, 3)));
    std::vector<double> w(d);
    for (auto& v : w) v = rng.uniform(0.2, 3.0);
    std::vector<Bounds> b(d, Bounds{0, 1});
    auto r = sobol_indices(additive(w), b, n, rng, 100);
    CHECK(r.s1.col(0).sum() >= 0.95);
    CHECK(r.s1.col(0).sum() <= 1.05);
    for (std::size_t i = 0; i < d; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      CHECK(std::abs(r.s1(k, 0) - r.st(k, 0)) < 0.05);
      CHECK(r.s1(k, 0) >= -0.05);
      CHECK(r.st(k, 0) <= 1.05);
      ++checks;
      if (r.st(k, 0) < r.s1(k, 0) - 2 * std::hypot(r.s1_se(k, 0), r.st_se(k, 0))) ++violations;
    }
  }
  // A one-sided 2-se bound is breached about 2.3% of the time by noise alone.
  CHECK(violations <= 0.05 * checks);
}

TEST_CASE("two-input additive sum at N=4096") {
  Rng rng(18);
  std::vector<Bounds> b(2, Bounds{0, 1});
  auto r = sobol_indices(additive({1.0, 2.0}), b, 4096, rng, 100);
  CHECK(r.s1.col(0).sum() >= 0.95);
  CHECK(r.s1.col(0).sum() <= 1.05);
  CHECK(r.s1(0, 0) == doctest::Approx(0.2).epsilon(0.25));
  CHECK(r.s1(1, 0) == doctest::Approx(0.8).epsilon(0.0625));
}

TEST_CASE("property: bootstrap se shrinks like 1/sqrt(N)") {
  VectorFunction f = [](std::span<const double> x) {
    return Eigen::VectorXd::Constant(1, x[0] + 0.5 * x[1] * x[1] + x[0] * x[2]);
  };
  std::vector<Bounds> b(3, Bounds{0, 1});
  // Average over replicate runs so the ratio is not dominated by one draw.
  double se_small = 0, se_large = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng r1 = Rng::for_stream(9, s), r2 = Rng::for_stream(10, s);
    se_small += sobol_indices(f, b, 2048, r1, 200).st_se.mean();
    se_large += sobol_indices(f, b, 4096, r2, 200).st_se.mean();
  }
  const double ratio = se_small / se_large;
  CHECK(ratio >= 1.25);
  CHECK(ratio <= 1.6);
}

TEST_CASE("rank_and_select") {
  std::vector<Bounds> b(3, Bounds{0, 1});
  Rng rng(11);
  auto r = sobol_indices(additive({4, 2, 1}), b, 4096, rng, 50, {"x1", "x2", "x3"});
  CHECK(rank_and_select(r) == std::vector<std::size_t>{0, 1, 2});
  CHECK(rank_and_select(r, 2) == std::vector<std::size_t>{0, 1});
  CHECK(rank_and_select(r, 10).size() == 3);
  CHECK(rank_and_select(r, std::nullopt, 0.1) == std::vector<std::size_t>{0, 1});

  SobolResult tie;
  tie.names = {"a", "b", "c"};
  tie.s1 = tie.st = tie.s1_se = tie.st_se = Eigen::MatrixXd::Constant(3, 1, 0.3);
  CHECK(rank_and_select(tie) == std::vector<std::size_t>{0, 1, 2});
}
