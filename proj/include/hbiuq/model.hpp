#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "hbiuq/prob.hpp"

namespace hbiuq {

/// LogitForBounded maps a Uniform(lo, hi) coordinate onto the real line by
/// log-odds; the density is unchanged, only the sampling coordinates move.
enum class Transform { Identity, LogForPositive, LogitForBounded };

namespace role {
struct Shared {};
struct Hyper {};
/// Per-group value b_g ~ Normal(mean_parent, sd_parent).
struct PerGroup {
  std::string mean_parent;
  std::string sd_parent;
};
}  // namespace role

using ParameterRole = std::variant<role::Shared, role::Hyper, role::PerGroup>;

struct ParameterDecl {
  std::string name;
  ParameterRole role;
  std::optional<Distribution> prior;  // Shared and Hyper only
  Transform transform = Transform::Identity;

  static ParameterDecl shared(std::string name, Distribution prior,
                              Transform transform = Transform::Identity);
  static ParameterDecl hyper(std::string name, Distribution prior,
                             Transform transform = Transform::Identity);
  static ParameterDecl per_group(std::string name, std::string mean_parent,
                                 std::string sd_parent);

  bool is_shared() const { return std::holds_alternative<role::Shared>(role); }
  bool is_hyper() const { return std::holds_alternative<role::Hyper>(role); }
  bool is_per_group() const { return std::holds_alternative<role::PerGroup>(role); }
};

/// Grouped experimental records, stored contiguously.
class ObservationSet {
 public:
  ObservationSet() = default;
  ObservationSet(std::size_t control_dim, std::size_t output_dim);

  void add(std::size_t group, std::span<const double> control, std::span<const double> observed);

  std::size_t size() const { return groups_.size(); }
  bool empty() const { return groups_.empty(); }
  std::size_t control_dim() const { return control_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  /// One past the largest group id.
  std::size_t group_count() const { return group_count_; }
  std::size_t total_observations() const { return size() * output_dim_; }

  std::size_t group(std::size_t record) const { return groups_[record]; }
  std::span<const double> control(std::size_t record) const {
    return {controls_.data() + record * control_dim_, control_dim_};
  }
  std::span<const double> observed(std::size_t record) const {
    return {observed_.data() + record * output_dim_, output_dim_};
  }

  std::vector<std::size_t> group_sizes() const;
  /// Throws ConfigError if any group id in [0, group_count) has no record.
  void validate() const;

  /// Records of the listed groups, relabelled 0..k-1 in the listed order.
  ObservationSet subset_groups(std::span<const std::size_t> groups) const;

 private:
  std::size_t control_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::size_t group_count_ = 0;
  std::vector<std::size_t> groups_;
  std::vector<double> controls_;
  std::vector<double> observed_;
};

/// y^M(x, theta). Jacobian and code-variance hooks are optional.
///
/// Buffers are caller-owned: `out` has output_dim entries, `jacobian` is
/// row-major output_dim x param_dim.
struct ForwardModel {
  using EvalFn = std::function<void(std::span<const double> params,
                                    std::span<const double> control, std::span<double> out)>;

  std::size_t param_dim = 0;
  std::size_t output_dim = 0;
  EvalFn evaluate;
  EvalFn jacobian;
  EvalFn code_variance;
  EvalFn code_variance_jacobian;

  bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

enum class CodeVarianceSource { None, FromSurrogate };

struct NoiseModel {
  struct Known {
    std::vector<double> sigma;  // one entry, or one per output
  };
  struct Inferred {
    Distribution prior;
    std::string name = "sigma";
    Transform transform = Transform::LogForPositive;
  };

  std::variant<Known, Inferred> sigma;
  CodeVarianceSource code_variance = CodeVarianceSource::None;

  static NoiseModel known(std::vector<double> sigma);
  static NoiseModel inferred(Distribution prior, std::string name = "sigma",
                             Transform transform = Transform::LogForPositive);
  bool is_inferred() const { return std::holds_alternative<Inferred>(sigma); }
};

enum class Parameterization { Centered, NonCentered };

/// Model discrepancy is fixed to zero; the enum reserves the slot.
enum class Discrepancy { None };

struct GraphOptions {
  Parameterization parameterization = Parameterization::Centered;
  /// Central differences on the forward model when it has no Jacobian.
  bool finite_difference_fallback = false;
  double fd_step = 1e-6;
  Discrepancy discrepancy = Discrepancy::None;
};

enum class CoordinateKind { Shared, Hyper, PerGroup, NoiseSigma };

struct Coordinate {
  std::string name;
  CoordinateKind kind;
  std::size_t decl;  // index into declarations (unused for NoiseSigma)
  std::optional<std::size_t> group;
  Transform transform;
  double lo = 0.0;  // LogitForBounded range
  double hi = 1.0;
};

using NamedValue = std::pair<std::string, double>;

/// Validated hierarchical parameter graph and its joint log-posterior.
///
/// Flat layout: declarations in order, one coordinate per Shared/Hyper,
/// group_count coordinates per PerGroup family, and finally the inferred
/// noise sigma. Natural-space vectors hold parameter values; the sampler
/// works in unconstrained space, where LogForPositive coordinates are logs.
/// In the non-centred parameterization a per-group coordinate holds the
/// standardized offset z, with b = mean + sd * z.
class ModelGraph {
 public:
  static ModelGraph build(std::vector<ParameterDecl> decls, ObservationSet obs,
                          ForwardModel forward, NoiseModel noise, GraphOptions options = {});

  std::size_t dimension() const { return coords_.size(); }
  const std::vector<Coordinate>& coordinates() const { return coords_; }
  std::vector<std::string> coordinate_names() const;
  /// Flat index of a coordinate by full name, e.g. "mu_alpha" or "alpha[3]".
  std::size_t index_of(std::string_view name) const;

  const std::vector<ParameterDecl>& declarations() const { return decls_; }
  const ObservationSet& observations() const { return obs_; }
  const ForwardModel& forward() const { return forward_; }
  const NoiseModel& noise() const { return noise_; }
  const GraphOptions& options() const { return options_; }
  std::size_t group_count() const { return obs_.group_count(); }
  /// Declarations feeding the forward model (Shared and PerGroup), in order.
  const std::vector<std::size_t>& calibration_decls() const { return calib_; }

  /// Natural-space flat vector from named values; order of input is irrelevant.
  std::vector<double> pack(std::span<const NamedValue> values) const;
  std::vector<double> pack(const std::map<std::string, double>& values) const;
  std::vector<NamedValue> unpack(std::span<const double> flat) const;

  Eigen::VectorXd to_unconstrained(std::span<const double> natural) const;
  Eigen::VectorXd to_natural(std::span<const double> unconstrained) const;

  /// Log joint density at an unconstrained point, Jacobian terms included.
  double log_posterior(std::span<const double> unconstrained) const;
  std::vector<double> grad_log_posterior(std::span<const double> unconstrained) const;
  /// Both at once; `grad` must have dimension() entries.
  double log_posterior_and_gradient(std::span<const double> unconstrained,
                                    std::span<double> grad) const;

  /// Effective per-group calibration values b(g) for family `decl` (handles
  /// the non-centred case), from a natural-space vector.
  double group_value(std::span<const double> natural, std::size_t decl, std::size_t group) const;

 private:
  double evaluate(std::span<const double> u, double* grad) const;

  std::vector<ParameterDecl> decls_;
  ObservationSet obs_;
  ForwardModel forward_;
  NoiseModel noise_;
  GraphOptions options_;
  std::vector<Coordinate> coords_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::size_t> decl_offset_;  // first flat index of each declaration
  std::vector<std::size_t> calib_;
  std::vector<std::size_t> mean_parent_;  // per decl: flat index of parent (PerGroup only)
  std::vector<std::size_t> sd_parent_;
  std::optional<std::size_t> sigma_index_;
};

}  // namespace hbiuq
