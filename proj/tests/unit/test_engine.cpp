#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/stats.hpp"

using namespace hbiuq;

namespace {

NutsConfig quick_sampler(std::uint64_t seed, std::size_t kept = 1000, std::size_t burn_in = 500) {
  NutsConfig n;
  n.seed = seed;
  n.burn_in = burn_in;
  n.draws = burn_in + kept;
  return n;
}

ChainSet constant_chains(std::vector<std::string> names, std::vector<double> values, std::size_t kept = 500) {
  ChainSet cs;
  cs.names = std::move(names);
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) m.col(static_cast<Eigen::Index>(j)).setConstant(values[j]);
    cs.draws.push_back(m);
    cs.stats.emplace_back();
  }
  return cs;
}

double posterior_mean(const CalibrationResult& r, const std::string& name) {
  return stats::mean(r.summary.pooled(r.summary.index_of(name)));
}

double mc_se(const CalibrationResult& r, const std::string& name) {
  const auto& p = r.diagnostics.at(name);
  return p.sd / std::sqrt(p.ess_bulk);
}

}  // namespace

TEST_CASE("toy generator") {
  ToyOptions opt;
  opt.groups = 1;
  opt.per_group = 2;
  opt.alpha = {1, 0};
  opt.beta = {0, 0};
  opt.theta = {0, 0};
  opt.noise_sd = 0;
  opt.x = {1, 2};
  Rng rng(1);
  auto d = generate_toy_data(opt, rng);
  REQUIRE(d.observations.size() == 2);
  CHECK(d.observations.observed(0)[0] == 1.0);
  CHECK(d.observations.observed(1)[0] == 4.0);

  ToyOptions defaults;
  CHECK(defaults.groups == 100);
  CHECK(defaults.per_group == 5);
  CHECK(defaults.alpha.mean == 4.0);
  CHECK(defaults.beta.mean == 2.0);
  CHECK(defaults.theta.mean == -2.0);

  ToyOptions many;
  many.groups = 10000;
  Rng rng2(2);
  auto big = generate_toy_data(many, rng2);
  CHECK(std::abs(big.truth.col(0).mean() - 4.0) < 0.03);
  CHECK(big.observations.group_count() == 10000);
}

TEST_CASE("single group cannot identify a hierarchy") {
  ToyOptions opt;
  opt.groups = 1;
  Rng rng(3);
  auto d = generate_toy_data(opt, rng);
  CHECK_THROWS_AS(run_hierarchical(toy_problem(quick_sampler(1)), d.observations), ConfigError);
}

TEST_CASE("prior-range extension decisions") {
  std::vector<Bounds> b{{0, 3}};
  Rng rng(4);
  ChainSet near = constant_chains({"t"}, {2.99});
  auto up = extend_prior_range(near, {"t"}, b);
  CHECK_FALSE(up.converged);
  CHECK(up.bounds[0].lo == 0.0);
  CHECK(up.bounds[0].hi == doctest::Approx(4.5));
  CHECK(up.extended == std::vector<std::string>{"t"});

  ChainSet interior = constant_chains({"t"}, {1.2});
  auto keep = extend_prior_range(interior, {"t"}, b);
  CHECK(keep.converged);
  CHECK(keep.top_mass[0] < 0.001);
  CHECK(keep.bounds[0].hi == 3.0);
}

TEST_CASE("prior extension loop on a truncated target") {
  IuqProblem p;
  CalibrationParameter c;
  c.name = "t";
  c.per_group = false;
  c.prior = Distribution::uniform(0, 3);
  p.parameters = {c};
  p.forward = additive_forward({1.0});
  p.noise = NoiseModel::known({1.0});
  p.sampler = quick_sampler(5, 1000, 500);
  ObservationSet obs(0, 1);
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    double y = rng.normal(4.0, 1.0);
    obs.add(0, {}, std::span<const double>(&y, 1));
  }
  auto r = calibrate_with_extension(p, obs, false);
  CHECK(r.extension_rounds >= 1);
  CHECK(r.extension_rounds <= 2);
  CHECK(r.ranges[0].hi > 4.0);
  const auto& s = r.diagnostics.at("t");
  CHECK(s.q025 < 4.0 + 1.0);
  CHECK(s.q975 > 4.0 - 1.0);
}

TEST_CASE("population resampling collapses onto a point hyper posterior") {
  ChainSet cs = constant_chains({"mu_b", "sigma_b"}, {2.0, 0.5}, 1000);
  std::vector<FamilyRef> fam{{"b", 0, 1}};
  Rng rng(7);
  const std::size_t n = 5000;
  auto pop = resample_population(cs, fam, n, rng);
  REQUIRE(pop.draws.rows() == static_cast<Eigen::Index>(n));
  const double se_mean = 0.5 / std::sqrt(static_cast<double>(n));
  const double se_sd = 0.5 / std::sqrt(2.0 * static_cast<double>(n));
  CHECK(std::abs(pop.fitted[0].mean - 2.0) < 3 * se_mean);
  CHECK(std::abs(pop.fitted[0].sd - 0.5) < 3 * se_sd);
  CHECK(pop.fitted[0].sd > 0);

  // Moments do not depend on draw order.
  std::vector<double> col(pop.draws.col(0).data(), pop.draws.col(0).data() + n);
  auto perm = rng.permutation(n);
  std::vector<double> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = col[perm[i]];
  CHECK(stats::mean(shuffled) == doctest::Approx(stats::mean(col)).epsilon(1e-12));
  CHECK(stats::sd(shuffled) == doctest::Approx(stats::sd(col)).epsilon(1e-12));
}

TEST_CASE("small toy calibration: population, predictive check, determinism") {
  ToyOptions opt;
  opt.groups = 20;
  Rng rng(8);
  auto d = generate_toy_data(opt, rng);
  auto problem = toy_problem(quick_sampler(11));
  auto r = run_hierarchical(problem, d.observations);
  CHECK(r.status == CalibrationStatus::Converged);
  CHECK(r.families.size() == 3);
  CHECK(r.summary.dim() == 7);
  CHECK(r.chains.dim() == 67);

  Rng prng(9);
  auto pop = resample_population(r.summary, r.families, 5000, prng);
  const double truth[] = {4, 2, -2};
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(pop.fitted[static_cast<std::size_t>(k)].mean - truth[k]) < 0.6);
    CHECK(pop.fitted[static_cast<std::size_t>(k)].sd > 0);
  }
  CHECK(pop.correlation.rows() == 3);
  CHECK(pop.correlation(0, 0) == doctest::Approx(1.0));

  Rng ppc_rng(10);
  auto ppc = posterior_predictive_check(problem, d.observations, r, &pop, PpcOptions{}, ppc_rng);
  CHECK(ppc.records.size() == d.observations.size());
  CHECK(ppc.coverage >= 0.88);
  CHECK(ppc.coverage <= 0.99 + 1e-12);
  CHECK(ppc.mae_calibrated <= ppc.mae_nominal);
  for (const auto& rec : ppc.records) {
    CHECK(rec.lower <= rec.mean);
    CHECK(rec.mean <= rec.upper);
  }

  PpcOptions point;
  point.draws = 1;
  Rng point_rng(11);
  auto single = posterior_predictive_check(problem, d.observations, r, &pop, point, point_rng);
  for (const auto& rec : single.records) CHECK(rec.upper - rec.lower == 0.0);

  auto again = run_hierarchical(problem, d.observations);
  for (std::size_t c = 0; c < r.chains.chains(); ++c) CHECK(again.chains.draws[c] == r.chains.draws[c]);
}

TEST_CASE("identical groups: hierarchical and pooled means agree") {
  ToyOptions opt;
  opt.groups = 20;
  opt.alpha.sd = opt.beta.sd = opt.theta.sd = 0.0;
  Rng rng(12);
  auto d = generate_toy_data(opt, rng);
  auto problem = toy_problem(quick_sampler(13, 2000, 1000));
  problem.graph.parameterization = Parameterization::NonCentered;
  auto h = run_hierarchical(problem, d.observations);
  auto f = run_nonhierarchical(problem, d.observations);
  for (std::string fam : {"alpha", "beta", "theta"}) {
    const double diff = std::abs(posterior_mean(h, mean_name(fam)) - posterior_mean(f, fam));
    const double tol = 3 * std::hypot(mc_se(h, mean_name(fam)), mc_se(f, fam));
    CHECK(diff < tol);
  }
}

TEST_CASE("conjugate family with a pinned population sd matches the pooled posterior") {
  IuqProblem p;
  CalibrationParameter c;
  c.name = "b";
  c.per_group = true;
  c.mean_prior = Distribution::normal(0.0, 10.0);
  c.sd_prior = Distribution::uniform(0.0, 0.01);
  p.parameters = {c};
  p.forward = additive_forward({1.0});
  p.noise = NoiseModel::known({1.0});
  p.graph.parameterization = Parameterization::NonCentered;
  p.sampler = quick_sampler(14, 3000, 1000);
  ObservationSet obs(0, 1);
  Rng rng(15);
  double sum = 0;
  const std::size_t K = 8, per = 4;
  for (std::size_t g = 0; g < K; ++g)
    for (std::size_t i = 0; i < per; ++i) {
      double y = rng.normal(1.5, 1.0);
      sum += y;
      obs.add(g, {}, std::span<const double>(&y, 1));
    }
  const double n = static_cast<double>(K * per);
  const double post_prec = n + 1.0 / 100.0;
  const double post_mean = sum / post_prec;
  const double post_sd = 1.0 / std::sqrt(post_prec);
  auto r = run_hierarchical(p, obs);
  CHECK(std::abs(posterior_mean(r, "mu_b") - post_mean) < 3 * mc_se(r, "mu_b"));
  CHECK(r.diagnostics.at("mu_b").sd == doctest::Approx(post_sd).epsilon(0.1));
}

TEST_CASE("outlier group moves pooled estimates more than hyper means") {
  ToyOptions opt;
  Rng rng(16);
  auto d = generate_toy_data(opt, rng);
  auto with = d;
  Rng orng(17);
  inject_outlier_group(with, opt, 10.0, orng);
  CHECK(with.observations.group_count() == opt.groups + 1);
  auto problem = toy_problem(quick_sampler(18));
  auto h0 = run_hierarchical(problem, d.observations), h1 = run_hierarchical(problem, with.observations);
  auto f0 = run_nonhierarchical(problem, d.observations), f1 = run_nonhierarchical(problem, with.observations);
  double shift_h = 0, shift_f = 0;
  for (std::string fam : {"alpha", "beta", "theta"}) {
    shift_h += std::abs(posterior_mean(h1, mean_name(fam)) - posterior_mean(h0, mean_name(fam)));
    shift_f += std::abs(posterior_mean(f1, fam) - posterior_mean(f0, fam));
  }
  CHECK(shift_h < shift_f);
}

TEST_CASE("split study input checks") {
  auto problem = toy_problem(quick_sampler(19));
  ObservationSet empty(1, 1);
  Rng rng(20);
  CHECK_THROWS_AS(dataset_split_study(problem, empty, true, 1, rng), ConfigError);

  auto halves = random_half_splits(10, 3, rng);
  REQUIRE(halves.size() == 3);
  for (const auto& h : halves) CHECK(h.size() == 5);
}
