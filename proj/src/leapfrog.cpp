#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "sampler_internal.hpp"

namespace hbiuq {

namespace detail {

double evaluate(const LogDensity& target, const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
  grad.resize(q.size());
  double lp;
  try {
    lp = target.fn({q.data(), static_cast<std::size_t>(q.size())},
                   {grad.data(), static_cast<std::size_t>(grad.size())});
  } catch (const EvaluationError&) {
    return -std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
  if (std::isnan(lp) || !grad.allFinite()) return -std::numeric_limits<double>::infinity();
  return lp;
}

bool leapfrog_step(const LogDensity& target, PhasePoint& z, double eps,
                   const Eigen::VectorXd& inv_mass) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_mass.cwiseProduct(z.p);
  z.logp = evaluate(target, z.q, z.grad);
  if (!std::isfinite(z.logp)) return false;
  z.p += 0.5 * eps * z.grad;
  return true;
}

double kinetic(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass) {
  return 0.5 * p.cwiseProduct(inv_mass).dot(p);
}

void run_chains(std::size_t chains, bool parallel,
                const std::function<void(std::size_t)>& body) {
  if (!parallel || chains < 2) {
    for (std::size_t c = 0; c < chains; ++c) body(c);
    return;
  }
  std::vector<std::exception_ptr> errors(chains);
  std::vector<std::thread> workers;
  workers.reserve(chains);
  for (std::size_t c = 0; c < chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        body(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Eigen::VectorXd> broadcast_inits(std::span<const Eigen::VectorXd> inits,
                                             std::size_t chains, std::size_t dim) {
  if (inits.size() != 1 && inits.size() != chains) {
    throw ConfigError("need one initial point, or one per chain");
  }
  std::vector<Eigen::VectorXd> out;
  for (std::size_t c = 0; c < chains; ++c) {
    out.push_back(inits[inits.size() == 1 ? 0 : c]);
    if (static_cast<std::size_t>(out.back().size()) != dim) {
      throw ConfigError("initial point has the wrong dimension");
    }
  }
  return out;
}

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t dim) {
  if (names.empty()) {
    for (std::size_t i = 0; i < dim; ++i) names.push_back("theta[" + std::to_string(i) + "]");
  }
  if (names.size() != dim) throw ConfigError("parameter name count does not match dimension");
  return names;
}

}  // namespace detail

std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const LogDensity& target,
                                                     const Eigen::VectorXd& theta,
                                                     const Eigen::VectorXd& momentum, double eps) {
  detail::PhasePoint z{theta, momentum, {}, 0.0};
  z.logp = detail::evaluate(target, z.q, z.grad);
  if (!std::isfinite(z.logp)) throw DivergenceError("leapfrog started outside the support");
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(theta.size());
  if (!detail::leapfrog_step(target, z, eps, unit)) {
    throw DivergenceError("leapfrog produced a non-finite gradient");
  }
  return {z.q, z.p};
}

double hmc_acceptance_probability(double logp_current, const Eigen::VectorXd& r0,
                                  double logp_proposed, const Eigen::VectorXd& r_proposed) {
  if (!std::isfinite(logp_proposed)) return 0.0;
  const double log_ratio =
      (logp_proposed - 0.5 * r_proposed.squaredNorm()) - (logp_current - 0.5 * r0.squaredNorm());
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

}  // namespace hbiuq
