#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

ValidationReport validate(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& actual) {
  if (predicted.rows() != actual.rows() || predicted.cols() != actual.cols()) {
    throw ConfigError("validate: prediction and reference shapes differ");
  }
  if (actual.rows() == 0) throw ConfigError("validate: empty validation set");
  ValidationReport r;
  const double n = static_cast<double>(actual.rows());
  for (Eigen::Index k = 0; k < actual.cols(); ++k) {
    const Eigen::ArrayXd err = predicted.col(k).array() - actual.col(k).array();
    const double mae = err.abs().sum() / n;
    const double sse = err.square().sum();
    const double mean = actual.col(k).mean();
    const double sst = (actual.col(k).array() - mean).square().sum();
    r.mae.push_back(mae);
    r.mse.push_back(sse / n);
    // R^2 is undefined for a constant reference; report 1 for an exact fit.
    r.r2.push_back(sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0));
  }
  const double q = static_cast<double>(actual.cols());
  for (std::size_t k = 0; k < r.mae.size(); ++k) {
    r.mean_mae += r.mae[k] / q;
    r.mean_mse += r.mse[k] / q;
    r.mean_r2 += r.r2[k] / q;
  }
  return r;
}

Eigen::MatrixXd evaluate_rows(const VectorFunction& f, const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd out;
  std::vector<double> row(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) row[static_cast<std::size_t>(j)] = inputs(i, j);
    const Eigen::VectorXd y = f(row);
    if (i == 0) out.resize(inputs.rows(), y.size());
    if (!y.allFinite()) {
      throw EvaluationError("design run " + std::to_string(i) + " returned a non-finite value",
                            static_cast<long>(i));
    }
    out.row(i) = y.transpose();
  }
  return out;
}

std::vector<ConvergenceRow> convergence_study(const VectorFunction& f,
                                              std::span<const Bounds> bounds,
                                              std::span<const std::size_t> sizes, Rng& rng,
                                              const ConvergenceOptions& options) {
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("convergence_study: sizes must be ascending");
  }
  const LhsDesign validation = lhs_sample(options.validation_size, bounds, rng);
  const Eigen::MatrixXd truth = evaluate_rows(f, validation.points);

  std::vector<ConvergenceRow> rows;
  for (std::size_t n : sizes) {
    try {
      const LhsDesign design = lhs_sample(n, bounds, rng);
      const Eigen::MatrixXd y = evaluate_rows(f, design.points);
      const PolySurrogate poly = fit_poly(design.points, y, options.poly_degree);
      Eigen::MatrixXd pred_poly(truth.rows(), truth.cols());
      Eigen::MatrixXd pred_gp(truth.rows(), truth.cols());
      std::vector<double> x(bounds.size());
      std::optional<GpSurrogate> gp;
      if (options.fit_gp) gp = fit_gp(design.points, y, options.gp);
      for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = validation.points(i, static_cast<Eigen::Index>(j));
        pred_poly.row(i) = poly.predict(x).transpose();
        if (gp) pred_gp.row(i) = gp->predict(x).mean.transpose();
      }
      rows.push_back({n, validate(pred_poly, truth).mean_mae,
                      gp ? validate(pred_gp, truth).mean_mae
                         : std::numeric_limits<double>::quiet_NaN()});
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "convergence study at design size " << n << ": " << e.what();
      throw NumericalError(msg.str());
    }
  }
  return rows;
}

std::size_t SurrogateTable::control_index(std::span<const double> control) const {
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const auto& c = controls[k];
    if (c.size() == control.size() && std::equal(c.begin(), c.end(), control.begin())) return k;
  }
  throw ConfigError("surrogate has no emulator for the requested control setting");
}

SurrogateTable fit_surrogate_table(const ForwardModel& forward, const ObservationSet& obs,
                                   std::span<const Bounds> bounds, std::size_t design_size,
                                   SurrogateKind kind, std::size_t degree, Rng& rng,
                                   const GpOptions& gp_options) {
  if (bounds.size() != forward.param_dim) {
    throw ConfigError("surrogate design bounds do not match the forward model inputs");
  }
  std::vector<std::vector<double>> controls;
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const auto c = obs.control(r);
    bool seen = false;
    for (const auto& k : controls) {
      if (std::equal(k.begin(), k.end(), c.begin(), c.end())) {
        seen = true;
        break;
      }
    }
    if (!seen) controls.emplace_back(c.begin(), c.end());
  }
  const std::size_t q = forward.output_dim;
  const LhsDesign design = lhs_sample(design_size, bounds, rng);
  Eigen::MatrixXd y(design.points.rows(), static_cast<Eigen::Index>(controls.size() * q));
  std::vector<double> x(forward.param_dim), out(q);
  for (Eigen::Index i = 0; i < design.points.rows(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = design.points(i, static_cast<Eigen::Index>(j));
    for (std::size_t c = 0; c < controls.size(); ++c) {
      forward.evaluate(x, controls[c], out);
      for (std::size_t k = 0; k < q; ++k) {
        if (!std::isfinite(out[k])) {
          throw EvaluationError("design run " + std::to_string(i) + " is non-finite",
                                static_cast<long>(i));
        }
        y(i, static_cast<Eigen::Index>(c * q + k)) = out[k];
      }
    }
  }
  SurrogateTable table{controls, q, PolySurrogate(0, {Bounds{0.0, 1.0}}, Eigen::MatrixXd::Zero(1, 1)),
                       design.points};
  if (kind == SurrogateKind::Poly) {
    table.surrogate = fit_poly(design.points, y, degree);
  } else {
    table.surrogate = fit_gp(design.points, y, gp_options);
  }
  return table;
}

ForwardModel make_surrogate_forward(std::shared_ptr<const SurrogateTable> table,
                                    std::size_t param_dim) {
  ForwardModel f;
  f.param_dim = param_dim;
  f.output_dim = table->outputs_per_control;
  const std::size_t q = table->outputs_per_control;
  if (const auto* poly = std::get_if<PolySurrogate>(&table->surrogate)) {
    if (poly->input_dim() != param_dim) throw ConfigError("surrogate input dimension mismatch");
    f.evaluate = [table, poly, q](std::span<const double> p, std::span<const double> c,
                                  std::span<double> out) {
      poly->predict_columns(p, table->control_index(c) * q, out);
    };
    f.jacobian = [table, poly, q](std::span<const double> p, std::span<const double> c,
                                  std::span<double> jac) {
      poly->gradient_columns(p, table->control_index(c) * q, q, jac);
    };
  } else {
    const auto* gp = &std::get<GpSurrogate>(table->surrogate);
    if (gp->input_dim() != param_dim) throw ConfigError("surrogate input dimension mismatch");
    f.evaluate = [table, gp, q](std::span<const double> p, std::span<const double> c,
                                std::span<double> out) {
      const std::size_t first = table->control_index(c) * q;
      for (std::size_t k = 0; k < q; ++k) out[k] = gp->predict_mean(p, first + k);
    };
    f.code_variance = [table, gp, q](std::span<const double> p, std::span<const double> c,
                                     std::span<double> out) {
      const std::size_t first = table->control_index(c) * q;
      for (std::size_t k = 0; k < q; ++k) out[k] = gp->predict_variance(p, first + k);
    };
  }
  return f;
}

}  // namespace hbiuq
