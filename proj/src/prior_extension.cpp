#include <sstream>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"

namespace hbiuq {

ExtensionDecision extend_prior_range(const ChainSet& chains, const std::vector<std::string>& names,
                                     const std::vector<Bounds>& bounds, const ExtensionPolicy& policy) {
  if (names.size() != bounds.size()) throw ConfigError("extend_prior_range: one range per parameter");
  if (chains.chains() == 0 || chains.kept() == 0) throw ConfigError("extend_prior_range: no draws");
  if (!(policy.factor > 1.0)) throw ConfigError("extension factor must exceed 1");
  ExtensionDecision d;
  d.bounds = bounds;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto draws = chains.pooled(chains.index_of(names[i]));
    const Bounds b = bounds[i];
    const double edge = b.hi - policy.top_fraction * (b.hi - b.lo);
    std::size_t top = 0;
    for (double v : draws) {
      if (v >= edge) ++top;
    }
    const double frac = static_cast<double>(top) / static_cast<double>(draws.size());
    d.top_mass.push_back(frac);
    if (frac > policy.mass_fraction) {
      d.bounds[i].hi = b.lo + policy.factor * (b.hi - b.lo);
      d.extended.push_back(names[i]);
      d.converged = false;
    }
  }
  return d;
}

CalibrationResult calibrate_with_extension(IuqProblem problem, const ObservationSet& data, bool hierarchical,
                                           const ExtensionPolicy& policy) {
  // Only parameters with bounded (Uniform) priors can be extended.
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < problem.parameters.size(); ++i) {
    const auto& p = problem.parameters[i];
    const Distribution& d = hierarchical && p.per_group ? p.mean_prior : p.prior;
    if (d.is_uniform()) which.push_back(i);
  }
  for (std::size_t round = 0;; ++round) {
    CalibrationResult res = calibrate(problem, data, hierarchical);
    std::vector<std::string> names;
    std::vector<Bounds> bounds;
    for (std::size_t i : which) {
      const auto& p = problem.parameters[i];
      const bool pg = hierarchical && p.per_group;
      const auto& u = (pg ? p.mean_prior : p.prior).as_uniform();
      names.push_back(pg ? mean_name(p.name) : p.name);
      bounds.push_back({u.lo, u.hi});
    }
    const ExtensionDecision d = extend_prior_range(res.summary, names, bounds, policy);
    if (d.converged) {
      res.extension_rounds = round;
      return res;
    }
    if (round + 1 > policy.max_rounds) {
      std::ostringstream msg;
      msg << "prior ranges still truncating the posterior after " << policy.max_rounds << " extensions";
      throw ConvergenceError(msg.str());
    }
    for (std::size_t k = 0; k < which.size(); ++k) {
      auto& p = problem.parameters[which[k]];
      const bool pg = hierarchical && p.per_group;
      const Bounds nb = d.bounds[k];
      if (nb.hi == bounds[k].hi) continue;
      (pg ? p.mean_prior : p.prior) = Distribution::uniform(nb.lo, nb.hi);
      if (p.range) p.range->hi = p.range->lo + policy.factor * (p.range->hi - p.range->lo);
    }
  }
}

}  // namespace hbiuq
