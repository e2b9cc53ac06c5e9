#include <algorithm>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"

namespace hbiuq {

ForwardModel quadratic_forward() {
  ForwardModel f;
  f.param_dim = 3;
  f.output_dim = 1;
  f.evaluate = [](std::span<const double> p, std::span<const double> c, std::span<double> out) {
    const double x = c[0];
    out[0] = p[0] * x * x + p[1] * x + p[2];
  };
  f.jacobian = [](std::span<const double>, std::span<const double> c, std::span<double> jac) {
    const double x = c[0];
    jac[0] = x * x;
    jac[1] = x;
    jac[2] = 1.0;
  };
  return f;
}

ForwardModel additive_forward(std::vector<double> weights, std::size_t) {
  if (weights.empty()) throw ConfigError("additive model needs at least one weight");
  ForwardModel f;
  f.param_dim = weights.size();
  f.output_dim = 1;
  f.evaluate = [weights](std::span<const double> p, std::span<const double>, std::span<double> out) {
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * p[i];
    out[0] = s;
  };
  f.jacobian = [weights](std::span<const double>, std::span<const double>, std::span<double> jac) {
    std::copy(weights.begin(), weights.end(), jac.begin());
  };
  return f;
}

ForwardModel product_forward(std::size_t param_dim, std::size_t) {
  if (param_dim == 0) throw ConfigError("product model needs at least one input");
  ForwardModel f;
  f.param_dim = param_dim;
  f.output_dim = 1;
  f.evaluate = [](std::span<const double> p, std::span<const double>, std::span<double> out) {
    double s = 1.0;
    for (double v : p) s *= v;
    out[0] = s;
  };
  f.jacobian = [](std::span<const double> p, std::span<const double>, std::span<double> jac) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      double s = 1.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (j != i) s *= p[j];
      }
      jac[i] = s;
    }
  };
  return f;
}

VectorFunction at_control(ForwardModel forward, std::vector<double> control) {
  return at_controls(std::move(forward), {std::move(control)});
}

VectorFunction at_controls(ForwardModel forward, std::vector<std::vector<double>> controls) {
  if (controls.empty()) throw ConfigError("need at least one control setting");
  return [forward = std::move(forward), controls = std::move(controls)](std::span<const double> p) {
    if (p.size() != forward.param_dim) throw ConfigError("input has the wrong dimension for the forward model");
    const std::size_t q = forward.output_dim;
    Eigen::VectorXd y(static_cast<Eigen::Index>(q * controls.size()));
    for (std::size_t c = 0; c < controls.size(); ++c) {
      forward.evaluate(p, controls[c], {y.data() + c * q, q});
    }
    return y;
  };
}

}  // namespace hbiuq
