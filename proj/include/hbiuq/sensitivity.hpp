#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbiuq/prob.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

struct ScreeningResult {
  std::vector<std::string> names;
  /// Largest output variance over the sweep of each parameter.
  std::vector<double> variance;
  /// parameters x outputs.
  Eigen::MatrixXd output_variance;
  std::vector<bool> selected;
  double threshold = 1e-3;
  std::size_t sweep_size = 0;

  std::vector<std::size_t> selected_indices() const;
};

/// One-at-a-time screening: each parameter is swept over `n` uniform draws
/// in its range while the others sit at `nominal` (the range midpoint if
/// empty). A parameter is selected when its output variance exceeds the
/// threshold.
ScreeningResult oat_screen(const VectorFunction& f, std::span<const Bounds> bounds,
                           std::span<const double> nominal, std::size_t n, double threshold, Rng& rng,
                           std::vector<std::string> names = {});

struct SobolResult {
  std::vector<std::string> names;
  std::size_t n = 0;            // base sample count
  std::size_t evaluations = 0;  // forward calls actually made
  std::size_t bootstrap = 0;
  /// parameters x outputs.
  Eigen::MatrixXd s1, st, s1_se, st_se;

  std::size_t input_dim() const { return static_cast<std::size_t>(s1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(s1.cols()); }
};

/// First-order and total Sobol indices from plain Monte Carlo A/B matrices
/// and d column-swapped hybrids (Jansen estimators), N(d+2) evaluations.
/// Standard errors come from a row bootstrap with `bootstrap` replicates.
/// Throws ZeroVarianceError when an output is constant.
SobolResult sobol_indices(const VectorFunction& f, std::span<const Bounds> bounds, std::size_t n, Rng& rng,
                          std::size_t bootstrap = 200, std::vector<std::string> names = {});

/// Parameters ordered by their largest total index over outputs, ties kept
/// in declaration order. With `k`, the first k are kept; with `threshold`,
/// only those whose largest ST exceeds it.
std::vector<std::size_t> rank_and_select(const SobolResult& result, std::optional<std::size_t> k = std::nullopt,
                                         std::optional<double> threshold = std::nullopt);

}  // namespace hbiuq
