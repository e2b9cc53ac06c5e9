#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hbiuq/engine.hpp"

namespace hbiuq {

/// Built-in forward models a config document can name.
struct ForwardSpec {
  std::string model = "quadratic";  // quadratic | additive | product
  std::vector<double> weights;      // additive only
  std::size_t inputs = 0;           // product only

  ForwardModel build() const;
  std::size_t control_dim() const { return model == "quadratic" ? 1 : 0; }
};

struct SensitivitySettings {
  /// Control settings to evaluate at; empty means the distinct controls of
  /// the data file (or none for control-free models).
  std::vector<std::vector<double>> controls;
  std::size_t screen_samples = 50;
  double threshold = 1e-3;
  std::size_t sobol_n = 4096;
  std::size_t bootstrap = 200;
  std::optional<std::size_t> top_k;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> output;
  bool hierarchical = true;
  ForwardSpec forward;
  /// Problem with the forward model built; sampler.seed mirrors `seed`.
  IuqProblem problem;
  /// Kept draws per chain; problem.sampler.draws holds burn-in + kept.
  std::size_t kept_per_chain = 1000;
  bool extend_priors = true;
  ExtensionPolicy extension;
  std::size_t population_draws = 4000;
  PpcOptions ppc;
  std::size_t splits = 0;
  SensitivitySettings sensitivity;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending path. Relative data paths resolve
/// against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Every setting with defaults materialized; parses back to the same config.
/// The output directory is left out since the document is written into it.
nlohmann::json resolved_config(const RunConfig& config);

/// Applies HBIUQ_SEED if set. Throws ConfigError on a malformed value.
void apply_seed_override(RunConfig& config);

/// The toy benchmark as a config: quadratic model, Unif(-10, 10) means,
/// Unif(0, 10) population sds and noise.
RunConfig toy_config(std::uint64_t seed, std::size_t kept_per_chain, std::size_t chains, std::size_t burn_in);

}  // namespace hbiuq
