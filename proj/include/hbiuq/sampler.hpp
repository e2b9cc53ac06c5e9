#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hbiuq/prob.hpp"

namespace hbiuq {

/// Log density at theta; writes the gradient into `grad`. Returning -inf
/// (or throwing EvaluationError / DomainError) marks a point outside the
/// support.
using LogDensityFn = std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct LogDensity {
  std::size_t dim = 0;
  LogDensityFn fn;
};

struct HmcConfig {
  double step_size = 0.1;
  std::size_t leapfrog_steps = 10;
  std::size_t chains = 4;
  /// Total iterations per chain, burn-in included.
  std::size_t draws = 2000;
  std::size_t burn_in = 500;
  std::uint64_t seed = 0;
  bool parallel = true;

  void validate() const;
};

struct NutsConfig {
  double target_accept = 0.8;
  std::size_t max_tree_depth = 10;
  /// Dual-averaging iterations; defaults to burn_in.
  std::optional<std::size_t> adaptation_steps;
  std::size_t chains = 4;
  std::size_t draws = 2000;
  std::size_t burn_in = 1000;
  std::uint64_t seed = 0;
  /// Windowed diagonal mass-matrix adaptation during burn-in.
  bool adapt_mass_matrix = true;
  /// Fixed initial step size; <= 0 runs the doubling/halving heuristic.
  double initial_step_size = 0.0;
  double max_energy_error = 1000.0;
  bool parallel = true;

  std::size_t adaptation() const { return adaptation_steps.value_or(burn_in); }
  void validate() const;
};

struct ChainStats {
  double mean_accept = 0.0;         // over kept draws
  std::size_t divergences = 0;      // kept draws with a divergent transition
  double step_size = 0.0;           // final (frozen) step size
  std::size_t max_depth_hits = 0;   // kept draws that saturated the tree depth
  double mean_tree_depth = 0.0;
  std::size_t gradient_evaluations = 0;
};

/// Multi-chain sampler output. draws[c] is kept-draws x dim.
struct ChainSet {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> draws;
  std::vector<ChainStats> stats;
  std::vector<std::string> warnings;

  std::size_t chains() const { return draws.size(); }
  std::size_t kept() const { return draws.empty() ? 0 : static_cast<std::size_t>(draws[0].rows()); }
  std::size_t dim() const { return names.size(); }
  std::size_t index_of(std::string_view name) const;

  std::vector<double> column(std::size_t chain, std::size_t param) const;
  /// Per-chain columns of one parameter.
  std::vector<std::vector<double>> columns(std::size_t param) const;
  /// All chains concatenated.
  std::vector<double> pooled(std::size_t param) const;
  /// Keep only the listed parameters.
  ChainSet select(std::span<const std::size_t> params) const;
  std::size_t total_divergences() const;
  double mean_acceptance() const;
};

/// One leapfrog step (half momentum, full position, half momentum) with unit
/// mass. Throws DivergenceError if the gradient is not finite.
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const LogDensity& target,
                                                     const Eigen::VectorXd& theta,
                                                     const Eigen::VectorXd& momentum, double eps);

/// min(1, exp(L(proposed) - r~.r~/2) / exp(L(current) - r0.r0/2)); 0 when
/// the proposal is outside the support.
double hmc_acceptance_probability(double logp_current, const Eigen::VectorXd& r0,
                                  double logp_proposed, const Eigen::VectorXd& r_proposed);

/// Plain HMC with fixed step size and path length. `inits` holds one start
/// per chain, or a single start shared by all chains.
ChainSet hmc_sample(const LogDensity& target, const HmcConfig& config,
                    std::span<const Eigen::VectorXd> inits, std::vector<std::string> names = {});

/// No-U-turn sampler (slice variant) with dual-averaging step-size adaptation.
ChainSet nuts_sample(const LogDensity& target, const NutsConfig& config,
                     std::span<const Eigen::VectorXd> inits, std::vector<std::string> names = {});

// Diagnostics -----------------------------------------------------------------

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0, q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0, q975 = 0.0;
  std::optional<double> rhat;  // absent for a single chain
  double ess_bulk = 0.0;
};

struct DiagnosticsReport {
  std::vector<ParameterSummary> parameters;
  std::size_t chains = 0;
  std::size_t draws_per_chain = 0;
  double acceptance_rate = 0.0;
  std::size_t divergences = 0;
  std::vector<std::string> warnings;

  const ParameterSummary& at(std::string_view name) const;
  /// Largest R-hat over the listed (or all) parameters; nullopt for one chain.
  std::optional<double> max_rhat(std::span<const std::string> names = {}) const;
  double min_ess(std::span<const std::string> names = {}) const;
};

/// Split R-hat over >= 2 chains (each chain halved); nullopt for one chain.
/// Disjoint constant chains give +infinity.
std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains);
/// Bulk effective sample size: rank-normalized split chains, Geyer's initial
/// monotone sequence.
double bulk_ess(const std::vector<std::vector<double>>& chains);
/// ESS of the raw values (no rank normalization), split chains.
double ess(const std::vector<std::vector<double>>& chains);

DiagnosticsReport diagnostics(const ChainSet& chains);

}  // namespace hbiuq
