#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hbiuq/sampler.hpp"

namespace hbiuq::detail {

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

/// Log density with support failures mapped to -inf.
double evaluate(const LogDensity& target, const Eigen::VectorXd& q, Eigen::VectorXd& grad);

/// In-place leapfrog with a diagonal inverse mass. False on a non-finite
/// log density or gradient (z is then unusable).
bool leapfrog_step(const LogDensity& target, PhasePoint& z, double eps,
                   const Eigen::VectorXd& inv_mass);

double kinetic(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass);

void run_chains(std::size_t chains, bool parallel, const std::function<void(std::size_t)>& body);

std::vector<Eigen::VectorXd> broadcast_inits(std::span<const Eigen::VectorXd> inits,
                                             std::size_t chains, std::size_t dim);

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t dim);

}  // namespace hbiuq::detail
