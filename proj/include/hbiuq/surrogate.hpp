#pragma once

#include <Eigen/Core>
#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hbiuq/model.hpp"
#include "hbiuq/prob.hpp"

namespace hbiuq {

struct Bounds {
  double lo;
  double hi;
};

/// Vector-valued function of the calibration inputs, used for design runs.
using VectorFunction = std::function<Eigen::VectorXd(std::span<const double>)>;

// Latin hypercube ------------------------------------------------------------

struct LhsDesign {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<Bounds> bounds;
  Eigen::MatrixXd points;  // n x d
};

/// One point per equal-width stratum in each dimension, uniformly jittered
/// inside its stratum, strata randomly permuted per dimension.
LhsDesign lhs_sample(std::size_t n, std::span<const Bounds> bounds, Rng& rng);

/// True if every dimension has exactly one point per stratum.
bool lhs_is_stratified(const LhsDesign& design);

// Polynomial regression ------------------------------------------------------

using Monomial = std::vector<unsigned>;

/// All monomials in p variables of total degree <= degree, graded order.
std::vector<Monomial> polynomial_basis(std::size_t p, std::size_t degree);
std::string describe_monomial(const Monomial& m);

/// Polynomial regression surrogate. Inputs are mapped affinely onto [-1, 1]
/// per dimension (using the training range) before basis expansion.
class PolySurrogate {
 public:
  PolySurrogate(std::size_t degree, std::vector<Bounds> scaling, Eigen::MatrixXd weights);

  std::size_t degree() const { return degree_; }
  std::size_t input_dim() const { return scaling_.size(); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weights_.cols()); }
  const std::vector<Monomial>& basis() const { return basis_; }
  /// basis x outputs, coefficients of the scaled monomials.
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<Bounds>& scaling() const { return scaling_; }

  Eigen::VectorXd predict(std::span<const double> x) const;
  /// outputs x inputs.
  Eigen::MatrixXd gradient(std::span<const double> x) const;

  /// Outputs [first, first + out.size()).
  void predict_columns(std::span<const double> x, std::size_t first, std::span<double> out) const;
  /// Row-major (count x input_dim) Jacobian of outputs [first, first + count).
  void gradient_columns(std::span<const double> x, std::size_t first, std::size_t count,
                        std::span<double> jac) const;

  /// Coefficients of the same basis expressed in the original (unscaled)
  /// input coordinates.
  Eigen::MatrixXd unscaled_weights() const;

 private:
  void scaled_powers(std::span<const double> x, std::vector<double>& pw) const;

  std::size_t degree_;
  std::vector<Bounds> scaling_;
  std::vector<Monomial> basis_;
  Eigen::MatrixXd weights_;
};

/// Ordinary least squares through a column-pivoted Householder QR.
/// inputs: n x p, outputs: n x q. Throws NumericalError on rank deficiency.
PolySurrogate fit_poly(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                       std::size_t degree);

// Gaussian process -----------------------------------------------------------

/// Anisotropic squared-exponential kernel; jitter is absolute.
struct SeKernel {
  double signal_variance = 1.0;
  std::vector<double> length_scales;
  double jitter = 0.0;
};

struct GpOptions {
  std::optional<SeKernel> init;  // per-output default derived from the data
  std::size_t restarts = 3;
  std::size_t max_iterations = 100;
  bool optimize = true;
  /// Jitter ladder relative to the signal variance.
  double min_relative_jitter = 1e-10;
  double max_relative_jitter = 1e-6;
  std::uint64_t seed = 0;
};

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Independent zero-noise GP per output with constant (training-mean) prior
/// mean and marginal-likelihood-optimized kernel hyperparameters.
class GpSurrogate {
 public:
  struct Output {
    SeKernel kernel;
    double prior_mean = 0.0;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd chol;  // lower Cholesky factor of K + jitter I
    double log_marginal_likelihood = 0.0;
  };

  GpSurrogate(Eigen::MatrixXd train_x, Eigen::MatrixXd train_y, std::vector<Output> outputs);
  GpSurrogate(const GpSurrogate& other);
  GpSurrogate& operator=(const GpSurrogate& other);

  std::size_t input_dim() const { return static_cast<std::size_t>(train_x_.cols()); }
  std::size_t output_dim() const { return outputs_.size(); }
  const Eigen::MatrixXd& train_x() const { return train_x_; }
  const Eigen::MatrixXd& train_y() const { return train_y_; }
  const std::vector<Output>& outputs() const { return outputs_; }

  GpPrediction predict(std::span<const double> x) const;
  double predict_mean(std::span<const double> x, std::size_t output) const;
  /// Latent predictive variance, clipped at zero from below.
  double predict_variance(std::span<const double> x, std::size_t output) const;
  /// outputs x inputs gradient of the predictive mean.
  Eigen::MatrixXd mean_gradient(std::span<const double> x) const;

  std::size_t clipped_variance_count() const { return clipped_.load(); }

 private:
  double kernel(const Output& o, std::span<const double> a, Eigen::Index row) const;

  Eigen::MatrixXd train_x_;
  Eigen::MatrixXd train_y_;
  std::vector<Output> outputs_;
  mutable std::atomic<std::size_t> clipped_{0};
};

/// Log marginal likelihood of (centred) targets under a kernel; -inf when
/// the kernel matrix cannot be factorized.
double gp_log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const SeKernel& kernel);

GpSurrogate fit_gp(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                   const GpOptions& options = {});

// Validation -----------------------------------------------------------------

struct ValidationReport {
  std::vector<double> mae;
  std::vector<double> mse;
  std::vector<double> r2;
  double mean_mae = 0.0;
  double mean_mse = 0.0;
  double mean_r2 = 0.0;
};

/// predicted and actual: n x q.
ValidationReport validate(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& actual);

Eigen::MatrixXd evaluate_rows(const VectorFunction& f, const Eigen::MatrixXd& inputs);

struct ConvergenceOptions {
  std::size_t poly_degree = 2;
  std::size_t validation_size = 50;
  bool fit_gp = true;
  GpOptions gp;
};

struct ConvergenceRow {
  std::size_t size;
  double poly_mae;
  double gp_mae;  // NaN when GP fitting is disabled
};

/// Fresh LHS per size, PR and GP fits, MAE on a common held-out LHS set.
std::vector<ConvergenceRow> convergence_study(const VectorFunction& f,
                                              std::span<const Bounds> bounds,
                                              std::span<const std::size_t> sizes, Rng& rng,
                                              const ConvergenceOptions& options = {});

// Surrogate-backed forward model ----------------------------------------------

/// Emulator of a forward model over the calibration inputs, one column block
/// of `outputs_per_control` outputs per distinct control setting.
struct SurrogateTable {
  std::vector<std::vector<double>> controls;
  std::size_t outputs_per_control = 1;
  std::variant<PolySurrogate, GpSurrogate> surrogate;
  /// Design points used to train (n x p), kept for the artifact record.
  Eigen::MatrixXd design;

  bool is_poly() const { return std::holds_alternative<PolySurrogate>(surrogate); }
  std::size_t control_index(std::span<const double> control) const;
};

enum class SurrogateKind { Poly, Gp };

/// Runs `forward` on an LHS design over `bounds` at every distinct control of
/// `obs` and fits the requested surrogate to the stacked outputs.
SurrogateTable fit_surrogate_table(const ForwardModel& forward, const ObservationSet& obs,
                                   std::span<const Bounds> bounds, std::size_t design_size,
                                   SurrogateKind kind, std::size_t degree, Rng& rng,
                                   const GpOptions& gp_options = {});

/// Forward model that evaluates the surrogate. Polynomial tables provide an
/// analytic Jacobian; GP tables provide code variance and no Jacobian.
ForwardModel make_surrogate_forward(std::shared_ptr<const SurrogateTable> table,
                                    std::size_t param_dim);

void save_surrogate(const SurrogateTable& table, const std::filesystem::path& path);
SurrogateTable load_surrogate(const std::filesystem::path& path);

}  // namespace hbiuq
