#include "hbiuq/model.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "hbiuq/error.hpp"

namespace hbiuq {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string group_name(const std::string& base, std::size_t g) {
  return base + "[" + std::to_string(g) + "]";
}

void check_transform(const std::string& name, Transform t, const Distribution& prior) {
  if (t == Transform::LogForPositive && (prior.is_normal() || prior.as_uniform().lo < 0.0)) {
    throw ConfigError("parameter '" + name + "' uses a log transform but its prior admits non-positive values");
  }
  if (t == Transform::LogitForBounded && !prior.is_uniform()) {
    throw ConfigError("parameter '" + name + "' uses a log-odds transform but its prior is unbounded");
  }
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ParameterDecl ParameterDecl::shared(std::string name, Distribution prior, Transform transform) {
  return {std::move(name), role::Shared{}, prior, transform};
}

ParameterDecl ParameterDecl::hyper(std::string name, Distribution prior, Transform transform) {
  return {std::move(name), role::Hyper{}, prior, transform};
}

ParameterDecl ParameterDecl::per_group(std::string name, std::string mean_parent,
                                       std::string sd_parent) {
  return {std::move(name), role::PerGroup{std::move(mean_parent), std::move(sd_parent)},
          std::nullopt, Transform::Identity};
}

// ObservationSet ------------------------------------------------------------

ObservationSet::ObservationSet(std::size_t control_dim, std::size_t output_dim)
    : control_dim_(control_dim), output_dim_(output_dim) {
  if (output_dim == 0) throw ConfigError("observation set needs at least one output");
}

void ObservationSet::add(std::size_t group, std::span<const double> control,
                         std::span<const double> observed) {
  if (control.size() != control_dim_ || observed.size() != output_dim_) {
    throw ConfigError("observation record has wrong control/output dimensionality");
  }
  for (double y : observed) {
    if (!std::isfinite(y)) throw ConfigError("observation contains a non-finite value");
  }
  groups_.push_back(group);
  controls_.insert(controls_.end(), control.begin(), control.end());
  observed_.insert(observed_.end(), observed.begin(), observed.end());
  group_count_ = std::max(group_count_, group + 1);
}

std::vector<std::size_t> ObservationSet::group_sizes() const {
  std::vector<std::size_t> sizes(group_count_, 0);
  for (auto g : groups_) ++sizes[g];
  return sizes;
}

void ObservationSet::validate() const {
  const auto sizes = group_sizes();
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] == 0) {
      throw ConfigError("group " + std::to_string(g) + " has no observations");
    }
  }
}

ObservationSet ObservationSet::subset_groups(std::span<const std::size_t> groups) const {
  ObservationSet out(control_dim_, output_dim_);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    for (std::size_t r = 0; r < size(); ++r) {
      if (groups_[r] == groups[k]) out.add(k, control(r), observed(r));
    }
  }
  return out;
}

// NoiseModel ----------------------------------------------------------------

NoiseModel NoiseModel::known(std::vector<double> sigma) {
  if (sigma.empty()) throw ConfigError("known noise needs at least one sigma");
  for (double s : sigma) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("known noise sigma must be > 0");
  }
  return NoiseModel{Known{std::move(sigma)}, CodeVarianceSource::None};
}

NoiseModel NoiseModel::inferred(Distribution prior, std::string name, Transform transform) {
  if (prior.is_normal() || prior.as_uniform().lo < 0.0) {
    throw ConfigError("inferred noise sigma needs a Uniform prior on positive values");
  }
  if (transform == Transform::Identity) throw ConfigError("inferred noise sigma must be sampled on a transformed scale");
  return NoiseModel{Inferred{prior, std::move(name), transform}, CodeVarianceSource::None};
}

// ModelGraph ----------------------------------------------------------------

ModelGraph ModelGraph::build(std::vector<ParameterDecl> decls, ObservationSet obs,
                             ForwardModel forward, NoiseModel noise, GraphOptions options) {
  ModelGraph g;
  std::map<std::string, std::size_t, std::less<>> by_name;
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& d = decls[i];
    if (d.name.empty() || d.name.find_first_of("[],\"") != std::string::npos) {
      throw ConfigError("invalid parameter name '" + d.name + "'");
    }
    if (!by_name.emplace(d.name, i).second) {
      throw ConfigError("duplicate parameter name '" + d.name + "'");
    }
    if (d.is_per_group()) {
      if (d.prior) throw ConfigError("per-group parameter '" + d.name + "' cannot have a prior");
      if (d.transform != Transform::Identity) {
        throw ConfigError("per-group parameter '" + d.name + "' must use the identity transform");
      }
    } else if (!d.prior) {
      throw ConfigError("parameter '" + d.name + "' needs a prior");
    }
    if (d.prior) check_transform(d.name, d.transform, *d.prior);
  }
  if (const auto* inf = std::get_if<NoiseModel::Inferred>(&noise.sigma)) {
    if (by_name.count(inf->name)) {
      throw ConfigError("noise sigma name '" + inf->name + "' collides with a parameter");
    }
  } else {
    const auto& sig = std::get<NoiseModel::Known>(noise.sigma).sigma;
    if (sig.size() != 1 && sig.size() != obs.output_dim()) {
      throw ConfigError("known sigma needs one value or one per output");
    }
  }

  bool hierarchical = false;
  for (const auto& d : decls) {
    if (const auto* pg = std::get_if<role::PerGroup>(&d.role)) {
      hierarchical = true;
      for (const auto* parent : {&pg->mean_parent, &pg->sd_parent}) {
        auto it = by_name.find(*parent);
        if (it == by_name.end()) {
          throw ConfigError("per-group parameter '" + d.name + "' references unknown parent '" +
                            *parent + "'");
        }
        if (!decls[it->second].is_hyper()) {
          throw ConfigError("per-group parameter '" + d.name + "' references non-hyper parent '" +
                            *parent + "'");
        }
      }
    }
  }
  if (obs.empty()) throw ConfigError("observation set is empty");
  obs.validate();
  if (hierarchical && obs.group_count() == 0) throw ConfigError("hierarchical model without groups");

  std::size_t n_calib = 0;
  for (const auto& d : decls) n_calib += (d.is_shared() || d.is_per_group()) ? 1 : 0;
  if (forward.param_dim != n_calib) {
    std::ostringstream msg;
    msg << "forward model takes " << forward.param_dim << " parameters but the graph declares "
        << n_calib << " calibration parameters";
    throw ConfigError(msg.str());
  }
  if (forward.output_dim != obs.output_dim()) {
    throw ConfigError("forward model output dimension does not match the observations");
  }
  if (!forward.evaluate) throw ConfigError("forward model has no evaluate function");
  if (noise.code_variance == CodeVarianceSource::FromSurrogate && !forward.code_variance) {
    throw ConfigError("code variance requested but the forward model provides none");
  }

  const std::size_t M = obs.group_count();
  const bool noncentered = options.parameterization == Parameterization::NonCentered;
  g.decl_offset_.resize(decls.size());
  g.mean_parent_.assign(decls.size(), 0);
  g.sd_parent_.assign(decls.size(), 0);
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& d = decls[i];
    g.decl_offset_[i] = g.coords_.size();
    if (d.is_per_group()) {
      const std::string base = noncentered ? d.name + "_raw" : d.name;
      for (std::size_t grp = 0; grp < M; ++grp) {
        g.coords_.push_back({group_name(base, grp), CoordinateKind::PerGroup, i, grp,
                             Transform::Identity});
      }
    } else {
      Coordinate co{d.name, d.is_shared() ? CoordinateKind::Shared : CoordinateKind::Hyper,
                    i, std::nullopt, d.transform};
      if (d.transform == Transform::LogitForBounded) {
        co.lo = d.prior->as_uniform().lo;
        co.hi = d.prior->as_uniform().hi;
      }
      g.coords_.push_back(std::move(co));
    }
    if (d.is_shared() || d.is_per_group()) g.calib_.push_back(i);
  }
  for (std::size_t i = 0; i < decls.size(); ++i) {
    if (const auto* pg = std::get_if<role::PerGroup>(&decls[i].role)) {
      g.mean_parent_[i] = g.decl_offset_[by_name.at(pg->mean_parent)];
      g.sd_parent_[i] = g.decl_offset_[by_name.at(pg->sd_parent)];
    }
  }
  if (const auto* inf = std::get_if<NoiseModel::Inferred>(&noise.sigma)) {
    g.sigma_index_ = g.coords_.size();
    Coordinate co{inf->name, CoordinateKind::NoiseSigma, 0, std::nullopt, inf->transform};
    co.lo = inf->prior.as_uniform().lo;
    co.hi = inf->prior.as_uniform().hi;
    g.coords_.push_back(std::move(co));
  }
  for (std::size_t c = 0; c < g.coords_.size(); ++c) g.index_.emplace(g.coords_[c].name, c);

  g.decls_ = std::move(decls);
  g.obs_ = std::move(obs);
  g.forward_ = std::move(forward);
  g.noise_ = std::move(noise);
  g.options_ = options;
  return g;
}

std::vector<std::string> ModelGraph::coordinate_names() const {
  std::vector<std::string> names;
  names.reserve(coords_.size());
  for (const auto& c : coords_) names.push_back(c.name);
  return names;
}

std::size_t ModelGraph::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown coordinate '" + std::string(name) + "'");
  return it->second;
}

std::vector<double> ModelGraph::pack(std::span<const NamedValue> values) const {
  std::vector<double> flat(dimension(), 0.0);
  std::vector<bool> seen(dimension(), false);
  for (const auto& [name, value] : values) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("pack: unexpected name '" + name + "'");
    if (seen[it->second]) throw ConfigError("pack: duplicate name '" + name + "'");
    seen[it->second] = true;
    flat[it->second] = value;
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw ConfigError("pack: missing value for '" + coords_[c].name + "'");
  }
  return flat;
}

std::vector<double> ModelGraph::pack(const std::map<std::string, double>& values) const {
  std::vector<NamedValue> v(values.begin(), values.end());
  return pack(v);
}

std::vector<NamedValue> ModelGraph::unpack(std::span<const double> flat) const {
  if (flat.size() != dimension()) throw ConfigError("unpack: wrong vector length");
  std::vector<NamedValue> out;
  out.reserve(flat.size());
  for (std::size_t c = 0; c < flat.size(); ++c) out.emplace_back(coords_[c].name, flat[c]);
  return out;
}

Eigen::VectorXd ModelGraph::to_unconstrained(std::span<const double> natural) const {
  if (natural.size() != dimension()) throw ConfigError("to_unconstrained: wrong vector length");
  Eigen::VectorXd u(natural.size());
  for (std::size_t c = 0; c < natural.size(); ++c) {
    const auto& co = coords_[c];
    switch (co.transform) {
      case Transform::Identity:
        u[c] = natural[c];
        break;
      case Transform::LogForPositive:
        u[c] = std::log(natural[c]);
        break;
      case Transform::LogitForBounded: {
        const double t = (natural[c] - co.lo) / (co.hi - co.lo);
        u[c] = std::log(t) - std::log1p(-t);
        break;
      }
    }
  }
  return u;
}

Eigen::VectorXd ModelGraph::to_natural(std::span<const double> unconstrained) const {
  if (unconstrained.size() != dimension()) throw ConfigError("to_natural: wrong vector length");
  Eigen::VectorXd v(unconstrained.size());
  for (std::size_t c = 0; c < unconstrained.size(); ++c) {
    const auto& co = coords_[c];
    switch (co.transform) {
      case Transform::Identity:
        v[c] = unconstrained[c];
        break;
      case Transform::LogForPositive:
        v[c] = std::exp(unconstrained[c]);
        break;
      case Transform::LogitForBounded:
        v[c] = co.lo + (co.hi - co.lo) * logistic(unconstrained[c]);
        break;
    }
  }
  return v;
}

double ModelGraph::group_value(std::span<const double> natural, std::size_t decl,
                               std::size_t group) const {
  const double raw = natural[decl_offset_[decl] + group];
  if (options_.parameterization == Parameterization::Centered) return raw;
  return natural[mean_parent_[decl]] + natural[sd_parent_[decl]] * raw;
}

double ModelGraph::log_posterior(std::span<const double> u) const { return evaluate(u, nullptr); }

std::vector<double> ModelGraph::grad_log_posterior(std::span<const double> u) const {
  std::vector<double> grad(dimension());
  evaluate(u, grad.data());
  return grad;
}

double ModelGraph::log_posterior_and_gradient(std::span<const double> u,
                                              std::span<double> grad) const {
  if (grad.size() != dimension()) throw ConfigError("gradient buffer has wrong length");
  return evaluate(u, grad.data());
}

double ModelGraph::evaluate(std::span<const double> u, double* grad) const {
  const std::size_t D = dimension();
  if (u.size() != D) throw ConfigError("log_posterior: wrong vector length");
  if (grad) std::fill(grad, grad + D, 0.0);
  const bool noncentered = options_.parameterization == Parameterization::NonCentered;

  std::vector<double> v(D);
  std::vector<double> gv(grad ? D : 0, 0.0);
  double lp = 0.0;
  for (std::size_t c = 0; c < D; ++c) {
    const auto& co = coords_[c];
    switch (co.transform) {
      case Transform::Identity:
        v[c] = u[c];
        break;
      case Transform::LogForPositive:
        v[c] = std::exp(u[c]);
        lp += u[c];
        break;
      case Transform::LogitForBounded:
        v[c] = co.lo + (co.hi - co.lo) * logistic(u[c]);
        lp += std::log(co.hi - co.lo) - softplus(-u[c]) - softplus(u[c]);
        break;
    }
  }

  // Priors on shared and hyper coordinates and on the noise sigma.
  for (std::size_t c = 0; c < D; ++c) {
    const Distribution* prior = nullptr;
    if (coords_[c].kind == CoordinateKind::NoiseSigma) {
      prior = &std::get<NoiseModel::Inferred>(noise_.sigma).prior;
    } else if (coords_[c].kind != CoordinateKind::PerGroup) {
      prior = &*decls_[coords_[c].decl].prior;
    }
    if (!prior) continue;
    const double l = prior->log_pdf(v[c]);
    if (!std::isfinite(l)) return kNegInf;
    lp += l;
    if (grad) gv[c] += prior->grad_log_pdf(v[c]);
  }

  // Population layer.
  const std::size_t M = obs_.group_count();
  for (std::size_t d = 0; d < decls_.size(); ++d) {
    if (!decls_[d].is_per_group()) continue;
    const std::size_t m = mean_parent_[d], s = sd_parent_[d], off = decl_offset_[d];
    const double mu = v[m], sigma = v[s];
    if (!(sigma > 0.0)) return kNegInf;
    if (noncentered) {
      for (std::size_t grp = 0; grp < M; ++grp) {
        const double z = v[off + grp];
        lp += -kHalfLog2Pi - 0.5 * z * z;
        if (grad) gv[off + grp] -= z;
      }
    } else {
      const double log_sigma = std::log(sigma);
      for (std::size_t grp = 0; grp < M; ++grp) {
        const double z = (v[off + grp] - mu) / sigma;
        lp += -kHalfLog2Pi - log_sigma - 0.5 * z * z;
        if (grad) {
          gv[off + grp] -= z / sigma;
          gv[m] += z / sigma;
          gv[s] += (z * z - 1.0) / sigma;
        }
      }
    }
  }

  // Likelihood.
  const std::size_t P = forward_.param_dim, Q = forward_.output_dim;
  const bool use_cv = noise_.code_variance == CodeVarianceSource::FromSurrogate;
  std::vector<double> theta(P), out(Q), cv(use_cv ? Q : 0), jac, cvjac, dtheta(P);
  std::vector<double> tmp_plus, tmp_minus;
  const bool fd_jac = grad && !forward_.jacobian;
  const bool fd_cvjac = grad && use_cv && !forward_.code_variance_jacobian;
  if (grad) {
    if ((fd_jac || fd_cvjac) && !options_.finite_difference_fallback) {
      throw ConfigError(
          "gradient requested but the forward model provides no Jacobian; enable the "
          "finite-difference fallback or use a polynomial surrogate");
    }
    jac.resize(Q * P);
    if (use_cv) cvjac.resize(Q * P);
    tmp_plus.resize(Q);
    tmp_minus.resize(Q);
  }
  const std::vector<double>* known_sigma =
      noise_.is_inferred() ? nullptr : &std::get<NoiseModel::Known>(noise_.sigma).sigma;

  auto fd = [&](const ForwardModel::EvalFn& fn, std::span<const double> control,
                std::vector<double>& J) {
    for (std::size_t j = 0; j < P; ++j) {
      const double x0 = theta[j];
      const double h = options_.fd_step * std::max(1.0, std::abs(x0));
      theta[j] = x0 + h;
      fn(theta, control, tmp_plus);
      theta[j] = x0 - h;
      fn(theta, control, tmp_minus);
      theta[j] = x0;
      for (std::size_t k = 0; k < Q; ++k) J[k * P + j] = (tmp_plus[k] - tmp_minus[k]) / (2.0 * h);
    }
  };

  for (std::size_t r = 0; r < obs_.size(); ++r) {
    const std::size_t grp = obs_.group(r);
    for (std::size_t j = 0; j < P; ++j) {
      const std::size_t d = calib_[j];
      if (decls_[d].is_per_group()) {
        const double raw = v[decl_offset_[d] + grp];
        theta[j] = noncentered ? v[mean_parent_[d]] + v[sd_parent_[d]] * raw : raw;
      } else {
        theta[j] = v[decl_offset_[d]];
      }
    }
    const auto control = obs_.control(r);
    forward_.evaluate(theta, control, out);
    if (use_cv) forward_.code_variance(theta, control, cv);
    for (std::size_t k = 0; k < Q; ++k) {
      if (!std::isfinite(out[k]) || (use_cv && !std::isfinite(cv[k]))) {
        throw EvaluationError("forward model returned a non-finite value for record " +
                                  std::to_string(r),
                              static_cast<long>(r));
      }
    }
    if (grad) {
      if (fd_jac) {
        fd(forward_.evaluate, control, jac);
      } else {
        forward_.jacobian(theta, control, jac);
      }
      if (use_cv) {
        if (fd_cvjac) {
          fd(forward_.code_variance, control, cvjac);
        } else {
          forward_.code_variance_jacobian(theta, control, cvjac);
        }
      }
      std::fill(dtheta.begin(), dtheta.end(), 0.0);
    }
    const auto y = obs_.observed(r);
    for (std::size_t k = 0; k < Q; ++k) {
      const double s = known_sigma ? (*known_sigma)[known_sigma->size() == 1 ? 0 : k]
                                   : v[*sigma_index_];
      const double var = s * s + (use_cv ? std::max(cv[k], 0.0) : 0.0);
      const double res = y[k] - out[k];
      lp += -kHalfLog2Pi - 0.5 * std::log(var) - 0.5 * res * res / var;
      if (grad) {
        const double d_out = res / var;
        const double d_var = 0.5 * (res * res / var - 1.0) / var;
        if (!known_sigma) gv[*sigma_index_] += 2.0 * s * d_var;
        for (std::size_t j = 0; j < P; ++j) {
          dtheta[j] += jac[k * P + j] * d_out;
          if (use_cv && cv[k] > 0.0) dtheta[j] += cvjac[k * P + j] * d_var;
        }
      }
    }
    if (grad) {
      for (std::size_t j = 0; j < P; ++j) {
        const std::size_t d = calib_[j];
        if (!decls_[d].is_per_group()) {
          gv[decl_offset_[d]] += dtheta[j];
        } else if (noncentered) {
          const std::size_t c = decl_offset_[d] + grp;
          gv[mean_parent_[d]] += dtheta[j];
          gv[sd_parent_[d]] += v[c] * dtheta[j];
          gv[c] += v[sd_parent_[d]] * dtheta[j];
        } else {
          gv[decl_offset_[d] + grp] += dtheta[j];
        }
      }
    }
  }

  if (grad) {
    for (std::size_t c = 0; c < D; ++c) {
      const auto& co = coords_[c];
      switch (co.transform) {
        case Transform::Identity:
          grad[c] = gv[c];
          break;
        case Transform::LogForPositive:
          grad[c] = gv[c] * v[c] + 1.0;
          break;
        case Transform::LogitForBounded: {
          const double s = logistic(u[c]);
          grad[c] = gv[c] * (co.hi - co.lo) * s * (1.0 - s) + 1.0 - 2.0 * s;
          break;
        }
      }
    }
  }
  return lp;
}

}  // namespace hbiuq
