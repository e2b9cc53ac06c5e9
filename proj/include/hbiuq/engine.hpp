#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hbiuq/model.hpp"
#include "hbiuq/prob.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

// Forward models ---------------------------------------------------------------

/// y = alpha x^2 + beta x + theta; params (alpha, beta, theta), one control x.
ForwardModel quadratic_forward();
/// y = sum_i w_i p_i; controls are ignored.
ForwardModel additive_forward(std::vector<double> weights, std::size_t control_dim = 0);
/// y = prod_i p_i; controls are ignored.
ForwardModel product_forward(std::size_t param_dim, std::size_t control_dim = 0);

/// Adapts a forward model at one fixed control setting to a VectorFunction.
VectorFunction at_control(ForwardModel forward, std::vector<double> control);
/// Stacks the outputs at several control settings into one vector.
VectorFunction at_controls(ForwardModel forward, std::vector<std::vector<double>> controls);

// Synthetic benchmark ----------------------------------------------------------

struct ToyPopulation {
  double mean = 0.0;
  double sd = 1.0;  // 0 gives every group the same value
};

struct ToyOptions {
  std::size_t groups = 100;
  std::size_t per_group = 5;
  ToyPopulation alpha{4.0, 1.0};
  ToyPopulation beta{2.0, 1.0};
  ToyPopulation theta{-2.0, 1.0};
  double noise_sd = 0.5;
  /// Control grid; empty means per_group points evenly spaced on [-2, 2].
  std::vector<double> x;
};

struct ToyData {
  ObservationSet observations;
  /// groups x 3 hidden per-group (alpha, beta, theta).
  Eigen::MatrixXd truth;
  std::vector<double> x;
};

ToyData generate_toy_data(const ToyOptions& options, Rng& rng);

/// Adds one group whose parameters sit `shift_sds` population sds above the
/// population means.
void inject_outlier_group(ToyData& data, const ToyOptions& options, double shift_sds, Rng& rng);

// Problem definition -----------------------------------------------------------

struct CalibrationParameter {
  std::string name;
  /// Per-group family in hierarchical runs; always shared otherwise.
  bool per_group = true;
  /// Prior when the parameter is shared.
  Distribution prior = Distribution::uniform(0.0, 1.0);
  /// Population-mean and population-sd priors when per-group.
  Distribution mean_prior = Distribution::uniform(0.0, 1.0);
  Distribution sd_prior = Distribution::uniform(0.0, 1.0);
  /// Design range for surrogate fitting and sensitivity runs; defaults to
  /// the prior (shared) or mean prior (per-group) support.
  std::optional<Bounds> range;
  /// Baseline value for predictive checks; defaults to the prior midpoint.
  std::optional<double> nominal;

  Bounds design_range(bool hierarchical) const;
  double nominal_value(bool hierarchical) const;
};

enum class SurrogatePolicy { DirectForward, FitPoly, FitGp };

struct SurrogateSpec {
  SurrogatePolicy policy = SurrogatePolicy::DirectForward;
  std::size_t degree = 2;
  std::size_t design_size = 100;
  GpOptions gp;
};

struct IuqProblem {
  std::vector<CalibrationParameter> parameters;
  ForwardModel forward;
  NoiseModel noise = NoiseModel::inferred(Distribution::uniform(0.0, 10.0));
  SurrogateSpec surrogate;
  NutsConfig sampler;
  GraphOptions graph;
  /// Sampling transform of the population sds and the noise sigma.
  Transform scale_transform = Transform::LogitForBounded;

  std::vector<std::string> parameter_names() const;
};

/// The synthetic toy problem: alpha, beta, theta with Unif(-10, 10) means,
/// Unif(0, 10) sds and Unif(0, 10) noise.
IuqProblem toy_problem(const NutsConfig& sampler);

/// Names used in the flat parameter vector.
std::string mean_name(const std::string& family);
std::string sd_name(const std::string& family);

// Calibration ------------------------------------------------------------------

enum class CalibrationStatus { Converged, Failed };

struct FamilyRef {
  std::string name;
  std::size_t mean_index;  // in CalibrationResult::summary
  std::size_t sd_index;
};

struct CalibrationResult {
  bool hierarchical = true;
  std::shared_ptr<const ModelGraph> graph;
  /// Natural-space draws of every coordinate.
  ChainSet chains;
  /// Draws with per-group coordinates projected out.
  ChainSet summary;
  DiagnosticsReport diagnostics;
  CalibrationStatus status = CalibrationStatus::Converged;
  std::string status_message;
  std::shared_ptr<const SurrogateTable> surrogate;
  /// Per-group families (hierarchical runs only).
  std::vector<FamilyRef> families;
  /// Posterior of the forward-model inputs that are shared (non-hierarchical).
  std::vector<std::size_t> shared_indices;
  std::size_t extension_rounds = 0;
  /// Final design/prior ranges (after any prior extension).
  std::vector<Bounds> ranges;
};

/// Builds the graph (optionally over a fitted surrogate), samples with NUTS
/// and summarizes. R-hat above 1.1 on any summary coordinate sets the Failed
/// status; the draws are kept.
CalibrationResult run_hierarchical(const IuqProblem& problem, const ObservationSet& data);
CalibrationResult run_nonhierarchical(const IuqProblem& problem, const ObservationSet& data);
CalibrationResult calibrate(const IuqProblem& problem, const ObservationSet& data, bool hierarchical);

// Prior extension --------------------------------------------------------------

struct ExtensionPolicy {
  double factor = 1.5;
  double mass_fraction = 0.02;
  double top_fraction = 0.05;
  std::size_t max_rounds = 5;
};

struct ExtensionDecision {
  bool converged = true;
  std::vector<Bounds> bounds;
  std::vector<double> top_mass;  // posterior fraction in the top of each range
  std::vector<std::string> extended;
};

/// Checks each named coordinate against its range: more than mass_fraction
/// of the draws in the top top_fraction of [lo, hi] widens the range to
/// lo + factor (hi - lo).
ExtensionDecision extend_prior_range(const ChainSet& chains, const std::vector<std::string>& names,
                                     const std::vector<Bounds>& bounds, const ExtensionPolicy& policy = {});

/// Calibration wrapped in the extension loop: each round refits the
/// surrogate (if any) on the new ranges and widens the Uniform priors of the
/// extended parameters. Throws ConvergenceError past max_rounds.
CalibrationResult calibrate_with_extension(IuqProblem problem, const ObservationSet& data, bool hierarchical,
                                           const ExtensionPolicy& policy = {});

// Population posterior ---------------------------------------------------------

struct FittedNormal {
  double mean = 0.0;
  double sd = 0.0;
};

struct PopulationPosterior {
  std::vector<std::string> families;
  std::vector<FittedNormal> fitted;
  /// N_pop x families two-stage draws.
  Eigen::MatrixXd draws;
  /// Correlation of the hyper-mean draws, families x families.
  Eigen::MatrixXd correlation;
};

/// For each of n_pop pooled posterior draws (picked uniformly), one normal
/// draw per family from its (mean, sd) hyperparameters; Normal fitted by
/// moments.
PopulationPosterior resample_population(const ChainSet& chains, const std::vector<FamilyRef>& families,
                                        std::size_t n_pop, Rng& rng);

// Posterior predictive check ---------------------------------------------------

struct PpcOptions {
  std::size_t draws = 1000;
  bool include_noise = true;
};

struct PpcRecord {
  std::size_t record = 0;
  std::size_t group = 0;
  std::size_t output = 0;
  double observed = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double nominal = 0.0;
  std::size_t failures = 0;
};

struct PpcReport {
  std::vector<PpcRecord> records;
  std::size_t draws = 0;
  double coverage = 0.0;
  double mse_calibrated = 0.0;
  double mae_calibrated = 0.0;
  double mse_nominal = 0.0;
  double mae_nominal = 0.0;
  std::size_t flagged_records = 0;
};

/// Predictive inputs are population draws for per-group families and pooled
/// posterior draws for shared parameters. With a single draw the fitted
/// population means (posterior means) give a point prediction.
PpcReport posterior_predictive_check(const IuqProblem& problem, const ObservationSet& data,
                                     const CalibrationResult& calibration, const PopulationPosterior* population,
                                     const PpcOptions& options, Rng& rng);

// Dataset split study ----------------------------------------------------------

struct SplitComparison {
  std::string parameter;
  /// W1 distance between half-data posteriors over the full-data posterior sd.
  double normalized_distance = 0.0;
};

struct SplitRun {
  std::vector<std::size_t> first_half;  // group ids
  std::vector<SplitComparison> comparisons;
};

struct SplitReport {
  bool hierarchical = true;
  std::vector<SplitRun> splits;
  double max_distance() const;
};

/// Random group partitions into halves; for each, calibrates on both halves
/// and compares the population means (hierarchical) or shared parameters.
SplitReport dataset_split_study(const IuqProblem& problem, const ObservationSet& data, bool hierarchical,
                                std::size_t splits, Rng& rng, const CalibrationResult* full = nullptr);

/// Same partitions for both model kinds.
std::vector<std::vector<std::size_t>> random_half_splits(std::size_t groups, std::size_t splits, Rng& rng);
SplitReport dataset_split_study(const IuqProblem& problem, const ObservationSet& data, bool hierarchical,
                                const std::vector<std::vector<std::size_t>>& first_halves,
                                const CalibrationResult* full = nullptr);

}  // namespace hbiuq
