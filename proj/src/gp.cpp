#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>

#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd se_matrix(const Eigen::MatrixXd& x, double signal_variance,
                          const std::vector<double>& ls) {
  const auto n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < x.cols(); ++d) {
        const double t = (x(i, d) - x(j, d)) / ls[static_cast<std::size_t>(d)];
        r2 += t * t;
      }
      k(i, j) = k(j, i) = signal_variance * std::exp(-0.5 * r2);
    }
  }
  return k;
}

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double relative_jitter;
  bool ok = false;
};

/// Walks the jitter ladder (x10 per rung) until the Cholesky succeeds.
Factorization factorize(const Eigen::MatrixXd& k_se, double signal_variance, double min_rel,
                        double max_rel) {
  Factorization f;
  for (double rel = min_rel; rel <= max_rel * (1.0 + 1e-9); rel *= 10.0) {
    Eigen::MatrixXd k = k_se;
    k.diagonal().array() += rel * signal_variance;
    f.llt.compute(k);
    if (f.llt.info() == Eigen::Success) {
      f.relative_jitter = rel;
      f.ok = true;
      return f;
    }
  }
  return f;
}

struct LmlResult {
  double value = kNegInf;
  Eigen::VectorXd grad;  // w.r.t. (log signal variance, log length scales)
  double relative_jitter = 0.0;
};

LmlResult lml_with_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& log_params, double min_rel, double max_rel) {
  const auto n = x.rows();
  const auto p = x.cols();
  const double sf2 = std::exp(log_params[0]);
  std::vector<double> ls(static_cast<std::size_t>(p));
  for (Eigen::Index d = 0; d < p; ++d) ls[static_cast<std::size_t>(d)] = std::exp(log_params[d + 1]);

  LmlResult out;
  const Eigen::MatrixXd k_se = se_matrix(x, sf2, ls);
  auto f = factorize(k_se, sf2, min_rel, max_rel);
  if (!f.ok) return out;
  const Eigen::VectorXd alpha = f.llt.solve(y);
  const Eigen::MatrixXd L = f.llt.matrixL();
  out.value = -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  out.relative_jitter = f.relative_jitter;

  // d LML / d phi = 0.5 tr((alpha alpha^T - K^-1) dK/dphi)
  const Eigen::MatrixXd kinv = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;
  out.grad.resize(p + 1);
  // K (jitter included) scales linearly with the signal variance.
  Eigen::MatrixXd k_full = k_se;
  k_full.diagonal().array() += f.relative_jitter * sf2;
  out.grad[0] = 0.5 * (w.array() * k_full.array()).sum();
  for (Eigen::Index d = 0; d < p; ++d) {
    double g = 0.0;
    const double l2 = ls[static_cast<std::size_t>(d)] * ls[static_cast<std::size_t>(d)];
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        const double diff = x(i, d) - x(j, d);
        g += w(i, j) * k_se(i, j) * diff * diff / l2;
      }
    }
    out.grad[d + 1] = g;  // symmetric: 2 * 0.5 * sum over i > j
  }
  return out;
}

}  // namespace

double gp_log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const SeKernel& kernel) {
  const Eigen::MatrixXd k_se = se_matrix(x, kernel.signal_variance, kernel.length_scales);
  Eigen::MatrixXd k = k_se;
  k.diagonal().array() += kernel.jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd L = llt.matrixL();
  return -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
         0.5 * static_cast<double>(x.rows()) * std::log(2.0 * std::numbers::pi);
}

GpSurrogate::GpSurrogate(Eigen::MatrixXd train_x, Eigen::MatrixXd train_y,
                         std::vector<Output> outputs)
    : train_x_(std::move(train_x)), train_y_(std::move(train_y)), outputs_(std::move(outputs)) {}

GpSurrogate::GpSurrogate(const GpSurrogate& other)
    : train_x_(other.train_x_),
      train_y_(other.train_y_),
      outputs_(other.outputs_),
      clipped_(other.clipped_.load()) {}

GpSurrogate& GpSurrogate::operator=(const GpSurrogate& other) {
  train_x_ = other.train_x_;
  train_y_ = other.train_y_;
  outputs_ = other.outputs_;
  clipped_ = other.clipped_.load();
  return *this;
}

double GpSurrogate::kernel(const Output& o, std::span<const double> a, Eigen::Index row) const {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < train_x_.cols(); ++d) {
    const double t = (a[static_cast<std::size_t>(d)] - train_x_(row, d)) /
                     o.kernel.length_scales[static_cast<std::size_t>(d)];
    r2 += t * t;
  }
  return o.kernel.signal_variance * std::exp(-0.5 * r2);
}

double GpSurrogate::predict_mean(std::span<const double> x, std::size_t output) const {
  if (x.size() != input_dim()) throw ConfigError("GP predict: wrong input dimension");
  const auto& o = outputs_[output];
  double m = o.prior_mean;
  for (Eigen::Index i = 0; i < train_x_.rows(); ++i) m += o.alpha[i] * kernel(o, x, i);
  return m;
}

double GpSurrogate::predict_variance(std::span<const double> x, std::size_t output) const {
  if (x.size() != input_dim()) throw ConfigError("GP predict: wrong input dimension");
  const auto& o = outputs_[output];
  Eigen::VectorXd ks(train_x_.rows());
  for (Eigen::Index i = 0; i < train_x_.rows(); ++i) ks[i] = kernel(o, x, i);
  const Eigen::VectorXd v = o.chol.triangularView<Eigen::Lower>().solve(ks);
  const double var = o.kernel.signal_variance - v.squaredNorm();
  if (var < 0.0) {
    ++clipped_;
    return 0.0;
  }
  return var;
}

GpPrediction GpSurrogate::predict(std::span<const double> x) const {
  GpPrediction p{Eigen::VectorXd(output_dim()), Eigen::VectorXd(output_dim())};
  for (std::size_t k = 0; k < output_dim(); ++k) {
    p.mean[static_cast<Eigen::Index>(k)] = predict_mean(x, k);
    p.variance[static_cast<Eigen::Index>(k)] = predict_variance(x, k);
  }
  return p;
}

Eigen::MatrixXd GpSurrogate::mean_gradient(std::span<const double> x) const {
  if (x.size() != input_dim()) throw ConfigError("GP gradient: wrong input dimension");
  const auto p = train_x_.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(output_dim()), p);
  for (std::size_t k = 0; k < output_dim(); ++k) {
    const auto& o = outputs_[k];
    for (Eigen::Index i = 0; i < train_x_.rows(); ++i) {
      const double w = o.alpha[i] * kernel(o, x, i);
      for (Eigen::Index d = 0; d < p; ++d) {
        const double l = o.kernel.length_scales[static_cast<std::size_t>(d)];
        g(static_cast<Eigen::Index>(k), d) -= w * (x[static_cast<std::size_t>(d)] - train_x_(i, d)) / (l * l);
      }
    }
  }
  return g;
}

GpSurrogate fit_gp(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                   const GpOptions& options) {
  const auto n = inputs.rows();
  const auto p = inputs.cols();
  if (n < 2) throw ConfigError("fit_gp needs at least two training points");
  if (outputs.rows() != n) throw ConfigError("fit_gp: inputs and outputs differ in row count");
  if (!(options.min_relative_jitter > 0.0) ||
      options.max_relative_jitter < options.min_relative_jitter) {
    throw ConfigError("fit_gp: invalid jitter ladder");
  }

  std::vector<double> range(static_cast<std::size_t>(p));
  for (Eigen::Index d = 0; d < p; ++d) {
    const double r = inputs.col(d).maxCoeff() - inputs.col(d).minCoeff();
    range[static_cast<std::size_t>(d)] = r > 0.0 ? r : 1.0;
  }

  Rng rng(options.seed);
  std::vector<GpSurrogate::Output> fitted;
  for (Eigen::Index k = 0; k < outputs.cols(); ++k) {
    const Eigen::VectorXd yk = outputs.col(k);
    const double mean = yk.mean();
    const Eigen::VectorXd y = yk.array() - mean;
    const double var = y.squaredNorm() / static_cast<double>(n);
    const double sf2_default = var > 0.0 ? var : 1.0;

    Eigen::VectorXd start(p + 1);
    if (options.init) {
      if (options.init->length_scales.size() != static_cast<std::size_t>(p)) {
        throw ConfigError("fit_gp: initial kernel has wrong number of length scales");
      }
      start[0] = std::log(options.init->signal_variance);
      for (Eigen::Index d = 0; d < p; ++d) {
        start[d + 1] = std::log(options.init->length_scales[static_cast<std::size_t>(d)]);
      }
    } else {
      start[0] = std::log(sf2_default);
      for (Eigen::Index d = 0; d < p; ++d) start[d + 1] = std::log(0.5 * range[static_cast<std::size_t>(d)]);
    }
    // Box for the log-hyperparameters.
    Eigen::VectorXd lo(p + 1), hi(p + 1);
    lo[0] = std::log(sf2_default) - std::log(1e6);
    hi[0] = std::log(sf2_default) + std::log(1e6);
    for (Eigen::Index d = 0; d < p; ++d) {
      lo[d + 1] = std::log(1e-3 * range[static_cast<std::size_t>(d)]);
      hi[d + 1] = std::log(1e3 * range[static_cast<std::size_t>(d)]);
    }
    auto clamp = [&](Eigen::VectorXd v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };

    auto evaluate = [&](const Eigen::VectorXd& phi) {
      return lml_with_gradient(inputs, y, phi, options.min_relative_jitter,
                               options.max_relative_jitter);
    };

    Eigen::VectorXd best = clamp(start);
    LmlResult best_val = evaluate(best);
    if (options.optimize) {
      const std::size_t starts = std::max<std::size_t>(1, options.restarts);
      for (std::size_t s = 0; s < starts; ++s) {
        Eigen::VectorXd phi = clamp(start);
        if (s > 0) {
          phi[0] = std::log(sf2_default) + rng.uniform(-1.0, 1.0);
          for (Eigen::Index d = 0; d < p; ++d) {
            phi[d + 1] = std::log(range[static_cast<std::size_t>(d)]) + rng.uniform(-2.0, 1.0);
          }
          phi = clamp(phi);
        }
        LmlResult cur = evaluate(phi);
        if (!std::isfinite(cur.value)) continue;
        double step = 0.1;
        for (std::size_t it = 0; it < options.max_iterations; ++it) {
          const double gnorm = cur.grad.norm();
          if (!(gnorm > 1e-9)) break;
          bool improved = false;
          for (int tries = 0; tries < 30; ++tries) {
            Eigen::VectorXd cand = clamp(phi + (step / gnorm) * cur.grad);
            LmlResult next = evaluate(cand);
            if (std::isfinite(next.value) && next.value > cur.value) {
              const double gain = next.value - cur.value;
              phi = cand;
              cur = std::move(next);
              step *= 1.5;
              improved = true;
              if (gain < 1e-10 * (1.0 + std::abs(cur.value))) it = options.max_iterations;
              break;
            }
            step *= 0.5;
          }
          if (!improved) break;
        }
        if (cur.value > best_val.value) {
          best = phi;
          best_val = cur;
        }
      }
    }

    GpSurrogate::Output out;
    out.kernel.signal_variance = std::exp(best[0]);
    out.kernel.length_scales.resize(static_cast<std::size_t>(p));
    for (Eigen::Index d = 0; d < p; ++d) out.kernel.length_scales[static_cast<std::size_t>(d)] = std::exp(best[d + 1]);
    out.prior_mean = mean;
    const Eigen::MatrixXd k_se = se_matrix(inputs, out.kernel.signal_variance, out.kernel.length_scales);
    auto f = factorize(k_se, out.kernel.signal_variance, options.min_relative_jitter,
                       options.max_relative_jitter);
    if (!f.ok) {
      throw NumericalError(
          "fit_gp: kernel matrix is not positive definite even at the largest jitter "
          "(duplicate or nearly collinear inputs?)");
    }
    out.kernel.jitter = f.relative_jitter * out.kernel.signal_variance;
    out.chol = f.llt.matrixL();
    // Jitter is numerical, not noise: refine alpha toward K_se^-1 y with the jittered factor as
    // preconditioner so the mean still interpolates the training data.
    out.alpha = f.llt.solve(y);
    double res = (y - k_se * out.alpha).norm();
    for (int it = 0; it < 100 && res > 0.0; ++it) {
      const Eigen::VectorXd cand = out.alpha + f.llt.solve(y - k_se * out.alpha);
      const double r = (y - k_se * cand).norm();
      if (!(r < 0.99 * res)) break;
      out.alpha = cand;
      res = r;
    }
    out.log_marginal_likelihood = best_val.value;
    fitted.push_back(std::move(out));
  }
  return GpSurrogate(inputs, outputs, std::move(fitted));
}

}  // namespace hbiuq
