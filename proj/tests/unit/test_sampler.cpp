#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/LU>

#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/stats.hpp"

using namespace hbiuq;

namespace {

LogDensity std_normal(std::size_t dim) {
  return {dim, [](std::span<const double> x, std::span<double> g) {
            double lp = 0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              lp -= 0.5 * x[i] * x[i];
              g[i] = -x[i];
            }
            return lp;
          }};
}

LogDensity correlated_normal(double rho) {
  const double det = 1 - rho * rho;
  return {2, [rho, det](std::span<const double> x, std::span<double> g) {
            const double a = x[0], b = x[1];
            g[0] = -(a - rho * b) / det;
            g[1] = -(b - rho * a) / det;
            return -0.5 * (a * a - 2 * rho * a * b + b * b) / det;
          }};
}

// Conjugate micro-model: prior N(0, 1), one observation y = 2 with unit noise.
// Posterior N(1, 1/sqrt(2)).
LogDensity conjugate() {
  return {1, [](std::span<const double> x, std::span<double> g) {
            g[0] = -x[0] - (x[0] - 2.0);
            return -0.5 * x[0] * x[0] - 0.5 * (x[0] - 2.0) * (x[0] - 2.0);
          }};
}

double energy(const LogDensity& t, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  std::vector<double> g(t.dim);
  return -t.fn(std::span<const double>(q.data(), t.dim), g) + 0.5 * p.squaredNorm();
}

std::vector<std::vector<double>> iid_chains(Rng& rng, std::size_t chains, std::size_t n, double shift = 0.0) {
  std::vector<std::vector<double>> out(chains);
  for (std::size_t c = 0; c < chains; ++c)
    for (std::size_t i = 0; i < n; ++i) out[c].push_back(rng.normal() + shift * static_cast<double>(c));
  return out;
}

void check_quantiles_against_normal(const ChainSet& cs, double mean, double sd) {
  auto pooled = cs.pooled(0);
  const double ess = bulk_ess(cs.columns(0));
  REQUIRE(ess > 100);
  for (double p : {0.05, 0.5, 0.95}) {
    const double z = stats::normal_quantile(p);
    const double q = mean + sd * z;
    const double density = std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * 3.141592653589793));
    const double mcse = std::sqrt(p * (1 - p) / ess) / density;
    CHECK(std::abs(stats::quantile(pooled, p) - q) < 3 * mcse);
  }
}

}  // namespace

TEST_CASE("leapfrog by hand on a standard normal") {
  auto t = std_normal(1);
  Eigen::VectorXd q(1), p(1);
  q << 1.0;
  p << 0.0;
  auto [q1, p1] = leapfrog(t, q, p, 0.1);
  CHECK(q1(0) == doctest::Approx(0.995).epsilon(1e-14));
  CHECK(p1(0) == doctest::Approx(-0.09975).epsilon(1e-14));

  auto [q0, p0] = leapfrog(t, q, p, 0.0);
  CHECK(q0(0) == q(0));
  CHECK(p0(0) == p(0));
}

TEST_CASE("leapfrog is reversible") {
  auto t = correlated_normal(0.6);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd q(2), p(2);
    q << rng.normal(), rng.normal();
    p << rng.normal(), rng.normal();
    auto [q1, p1] = leapfrog(t, q, p, 0.13);
    auto [q2, p2] = leapfrog(t, q1, -p1, 0.13);
    CHECK((q2 - q).norm() < 1e-12);
    CHECK((-p2 - p).norm() < 1e-12);
  }
}

TEST_CASE("property: leapfrog preserves phase-space volume") {
  Rng rng(3);
  LogDensity banana{2, [](std::span<const double> x, std::span<double> g) {
                      const double a = x[0], b = x[1] - 0.3 * x[0] * x[0];
                      g[0] = -a + 0.6 * x[0] * b;
                      g[1] = -b;
                      return -0.5 * (a * a + b * b);
                    }};
  for (const auto& t : {correlated_normal(0.8), banana}) {
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd z(4);
      for (auto& v : z) v = rng.normal();
      auto step = [&](const Eigen::VectorXd& s) {
        auto [q, p] = leapfrog(t, s.head(2), s.tail(2), 0.2);
        Eigen::VectorXd o(4);
        o << q, p;
        return o;
      };
      Eigen::Matrix4d jac;
      const double h = 1e-5;
      for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd zp = z, zm = z;
        zp(j) += h;
        zm(j) -= h;
        jac.col(j) = (step(zp) - step(zm)) / (2 * h);
      }
      CHECK(std::abs(jac.determinant() - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("property: leapfrog energy error is second order") {
  auto t = correlated_normal(0.5);
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd q(2), p(2);
    q << rng.normal(), rng.normal();
    p << rng.normal(), rng.normal();
    auto run = [&](double eps, int steps) {
      Eigen::VectorXd a = q, b = p;
      for (int i = 0; i < steps; ++i) std::tie(a, b) = leapfrog(t, a, b, eps);
      return std::abs(energy(t, a, b) - energy(t, q, p));
    };
    const double coarse = run(0.02, 10), fine = run(0.01, 20);
    if (coarse < 1e-12) continue;
    const double ratio = coarse / fine;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
}

TEST_CASE("leapfrog flags a non-finite gradient") {
  LogDensity bad{1, [](std::span<const double>, std::span<double> g) {
                   g[0] = std::numeric_limits<double>::quiet_NaN();
                   return 0.0;
                 }};
  Eigen::VectorXd q = Eigen::VectorXd::Zero(1), p = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(leapfrog(bad, q, p, 0.1), DivergenceError);
}

TEST_CASE("acceptance probability") {
  Eigen::VectorXd r(2), s(2);
  r << 0.3, -1.2;
  s << 1.2, 0.3;
  CHECK(hmc_acceptance_probability(-1.7, r, -1.7, s) == 1.0);
  CHECK(hmc_acceptance_probability(-1.0, r, -3.0, r) == doctest::Approx(std::exp(-2.0)));
  CHECK(hmc_acceptance_probability(-1.0, r, -std::numeric_limits<double>::infinity(), r) == 0.0);
}

TEST_CASE("config validation") {
  HmcConfig h;
  h.burn_in = h.draws;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  NutsConfig n;
  n.max_tree_depth = 0;
  CHECK_THROWS_AS(n.validate(), ConfigError);
  n = {};
  n.chains = 0;
  CHECK_THROWS_AS(n.validate(), ConfigError);
}

TEST_CASE("HMC on a 2-D standard normal") {
  HmcConfig cfg;
  cfg.step_size = 0.2;
  cfg.leapfrog_steps = 10;
  cfg.chains = 1;
  cfg.draws = 20000;
  cfg.burn_in = 1000;
  cfg.seed = 1;
  std::vector<Eigen::VectorXd> init{Eigen::VectorXd::Zero(2)};
  auto cs = hmc_sample(std_normal(2), cfg, init);
  CHECK(cs.kept() == 19000);
  for (std::size_t j = 0; j < 2; ++j) {
    auto x = cs.pooled(j);
    CHECK(std::abs(stats::mean(x)) < 0.05);
    CHECK(std::abs(stats::sd(x) - 1.0) < 0.05);
  }
}

TEST_CASE("HMC and NUTS leave the conjugate posterior invariant") {
  std::vector<Eigen::VectorXd> init{Eigen::VectorXd::Zero(1)};
  HmcConfig h;
  h.step_size = 0.1;
  h.leapfrog_steps = 7;
  h.draws = 6000;
  h.burn_in = 1000;
  h.seed = 2;
  auto hc = hmc_sample(conjugate(), h, init);
  check_quantiles_against_normal(hc, 1.0, 1.0 / std::sqrt(2.0));

  NutsConfig n;
  n.draws = 6000;
  n.burn_in = 1000;
  n.seed = 3;
  auto nc = nuts_sample(conjugate(), n, init);
  check_quantiles_against_normal(nc, 1.0, 1.0 / std::sqrt(2.0));

  auto pooled = nc.pooled(0);
  const double ess = bulk_ess(nc.columns(0));
  CHECK(std::abs(stats::mean(pooled) - 1.0) < 3 * (1.0 / std::sqrt(2.0)) / std::sqrt(ess));
}

TEST_CASE("NUTS recovers a strong correlation and is deterministic") {
  NutsConfig n;
  n.draws = 3000;
  n.burn_in = 1000;
  n.seed = 9;
  std::vector<Eigen::VectorXd> init{Eigen::VectorXd::Zero(2)};
  auto a = nuts_sample(correlated_normal(0.9), n, init);
  CHECK(a.chains() == 4);
  CHECK(a.kept() == 2000);
  CHECK(std::abs(stats::correlation(a.pooled(0), a.pooled(1)) - 0.9) < 0.05);

  auto b = nuts_sample(correlated_normal(0.9), n, init);
  for (std::size_t c = 0; c < a.chains(); ++c) CHECK(a.draws[c] == b.draws[c]);

  n.parallel = false;
  auto serial = nuts_sample(correlated_normal(0.9), n, init);
  for (std::size_t c = 0; c < a.chains(); ++c) CHECK(a.draws[c] == serial.draws[c]);

  auto report = diagnostics(a);
  CHECK(report.max_rhat().value() < 1.05);
}

TEST_CASE("NUTS honours the support through rejection") {
  // Half-normal on (0, inf) written with hard rejection.
  LogDensity half{1, [](std::span<const double> x, std::span<double> g) {
                    if (x[0] <= 0) return -std::numeric_limits<double>::infinity();
                    g[0] = -x[0];
                    return -0.5 * x[0] * x[0];
                  }};
  NutsConfig n;
  n.draws = 3000;
  n.burn_in = 1000;
  n.seed = 4;
  std::vector<Eigen::VectorXd> init{Eigen::VectorXd::Constant(1, 0.5)};
  auto cs = nuts_sample(half, n, init);
  auto x = cs.pooled(0);
  for (double v : x) REQUIRE(v > 0);
  CHECK(stats::mean(x) == doctest::Approx(std::sqrt(2.0 / 3.141592653589793)).epsilon(0.05));
}

TEST_CASE("diagnostics") {
  Rng rng(6);
  auto iid = iid_chains(rng, 4, 2000);
  auto rhat = split_rhat(iid);
  REQUIRE(rhat.has_value());
  CHECK(*rhat >= 0.99);
  CHECK(*rhat <= 1.01);
  CHECK(bulk_ess(iid) == doctest::Approx(8000).epsilon(0.15));

  std::vector<std::vector<double>> constant{std::vector<double>(100, 1.0), std::vector<double>(100, 2.0)};
  auto inf = split_rhat(constant);
  REQUIRE(inf.has_value());
  CHECK(*inf > 10);

  std::vector<std::vector<double>> single{iid[0]};
  CHECK_FALSE(split_rhat(single).has_value());
  CHECK(bulk_ess(single) > 0);

  auto shifted = iid_chains(rng, 4, 1000, 3.0);
  CHECK(*split_rhat(shifted) > 1.5);

  ChainSet cs;
  cs.names = {"x"};
  cs.draws.resize(1);
  cs.draws[0].resize(2000, 1);
  for (int i = 0; i < 2000; ++i) cs.draws[0](i, 0) = iid[0][static_cast<std::size_t>(i)];
  cs.stats.resize(1);
  auto report = diagnostics(cs);
  CHECK_FALSE(report.at("x").rhat.has_value());
  CHECK(report.at("x").ess_bulk > 0);
  CHECK(report.at("x").q025 < report.at("x").q50);
  CHECK(report.at("x").q50 < report.at("x").q975);
}
