#include <cmath>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "sampler_internal.hpp"

namespace hbiuq {

void HmcConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("HMC step size must be positive");
  if (leapfrog_steps == 0) throw ConfigError("HMC needs at least one leapfrog step");
  if (chains == 0) throw ConfigError("need at least one chain");
  if (burn_in >= draws) throw ConfigError("burn-in must be smaller than the number of iterations");
}

namespace {

struct HmcChainResult {
  Eigen::MatrixXd kept;
  ChainStats stats;
};

HmcChainResult run_hmc_chain(const LogDensity& target, const HmcConfig& cfg,
                             const Eigen::VectorXd& init, Rng rng) {
  const auto dim = static_cast<Eigen::Index>(target.dim);
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(dim);
  detail::PhasePoint current{init, Eigen::VectorXd::Zero(dim), {}, 0.0};
  current.logp = detail::evaluate(target, current.q, current.grad);
  if (!std::isfinite(current.logp)) throw ConfigError("HMC initial point is outside the support");

  HmcChainResult res;
  res.kept.resize(static_cast<Eigen::Index>(cfg.draws - cfg.burn_in), dim);
  res.stats.step_size = cfg.step_size;
  res.stats.mean_tree_depth = std::log2(static_cast<double>(cfg.leapfrog_steps));
  double accept_sum = 0.0;
  std::size_t evals = 1;

  for (std::size_t m = 0; m < cfg.draws; ++m) {
    Eigen::VectorXd r0(dim);
    for (Eigen::Index i = 0; i < dim; ++i) r0[i] = rng.normal();
    detail::PhasePoint z{current.q, r0, current.grad, current.logp};
    bool ok = true;
    for (std::size_t l = 0; l < cfg.leapfrog_steps && ok; ++l) {
      ok = detail::leapfrog_step(target, z, cfg.step_size, unit);
      ++evals;
    }
    const double alpha =
        ok ? hmc_acceptance_probability(current.logp, r0, z.logp, z.p) : 0.0;
    if (!ok && m >= cfg.burn_in) ++res.stats.divergences;
    if (rng.uniform() < alpha) current = std::move(z);
    if (m >= cfg.burn_in) {
      accept_sum += alpha;
      res.kept.row(static_cast<Eigen::Index>(m - cfg.burn_in)) = current.q.transpose();
    }
  }
  res.stats.mean_accept = accept_sum / static_cast<double>(cfg.draws - cfg.burn_in);
  res.stats.gradient_evaluations = evals;
  return res;
}

}  // namespace

ChainSet hmc_sample(const LogDensity& target, const HmcConfig& config,
                    std::span<const Eigen::VectorXd> inits, std::vector<std::string> names) {
  config.validate();
  const auto starts = detail::broadcast_inits(inits, config.chains, target.dim);
  ChainSet out;
  out.names = detail::default_names(std::move(names), target.dim);
  std::vector<HmcChainResult> results(config.chains);
  detail::run_chains(config.chains, config.parallel, [&](std::size_t c) {
    results[c] = run_hmc_chain(target, config, starts[c], Rng::for_stream(config.seed, c));
  });
  for (std::size_t c = 0; c < config.chains; ++c) {
    if (results[c].stats.mean_accept < 0.01) {
      std::ostringstream msg;
      msg << "HMC chain " << c << " accepted " << results[c].stats.mean_accept * 100.0
          << "% of proposals; reduce the step size";
      throw ConvergenceError(msg.str());
    }
    out.draws.push_back(std::move(results[c].kept));
    out.stats.push_back(results[c].stats);
  }
  return out;
}

}  // namespace hbiuq
