#include <cmath>
#include <sstream>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"

namespace hbiuq {

namespace {

constexpr std::uint64_t kInitStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kDesignStream = 0xd1b54a32d192ed03ULL;

Bounds support_of(const Distribution& d) {
  if (d.is_uniform()) return {d.as_uniform().lo, d.as_uniform().hi};
  const auto& n = d.as_normal();
  return {n.mean - 3.0 * n.sd, n.mean + 3.0 * n.sd};
}

bool positive_support(const Distribution& d) { return d.is_uniform() && d.as_uniform().lo >= 0.0; }

Transform scale_transform(const IuqProblem& problem, const Distribution& prior) {
  if (!positive_support(prior)) return Transform::Identity;
  return problem.scale_transform;
}

}  // namespace

std::string mean_name(const std::string& family) { return "mu_" + family; }
std::string sd_name(const std::string& family) { return "sigma_" + family; }

Bounds CalibrationParameter::design_range(bool hierarchical) const {
  if (range) return *range;
  return support_of(hierarchical && per_group ? mean_prior : prior);
}

double CalibrationParameter::nominal_value(bool hierarchical) const {
  if (nominal) return *nominal;
  const Distribution& d = hierarchical && per_group ? mean_prior : prior;
  if (d.is_uniform()) return 0.5 * (d.as_uniform().lo + d.as_uniform().hi);
  return d.as_normal().mean;
}

std::vector<std::string> IuqProblem::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& p : parameters) out.push_back(p.name);
  return out;
}

IuqProblem toy_problem(const NutsConfig& sampler) {
  IuqProblem p;
  for (const char* name : {"alpha", "beta", "theta"}) {
    CalibrationParameter c;
    c.name = name;
    c.per_group = true;
    c.prior = Distribution::uniform(-10.0, 10.0);
    c.mean_prior = Distribution::uniform(-10.0, 10.0);
    c.sd_prior = Distribution::uniform(0.0, 10.0);
    p.parameters.push_back(std::move(c));
  }
  p.forward = quadratic_forward();
  p.noise = NoiseModel::inferred(Distribution::uniform(0.0, 10.0));
  p.sampler = sampler;
  return p;
}

CalibrationResult calibrate(const IuqProblem& problem, const ObservationSet& data, bool hierarchical) {
  if (data.empty()) throw ConfigError("no observations");
  data.validate();
  if (problem.parameters.empty()) throw ConfigError("no calibration parameters");
  if (problem.parameters.size() != problem.forward.param_dim) {
    throw ConfigError("forward model takes " + std::to_string(problem.forward.param_dim) + " inputs but " +
                      std::to_string(problem.parameters.size()) + " parameters are declared");
  }
  bool any_per_group = false;
  for (const auto& p : problem.parameters) any_per_group = any_per_group || p.per_group;
  if (hierarchical && any_per_group && data.group_count() < 2) {
    throw ConfigError("hierarchical model is unidentifiable with a single group: the population sd is unconstrained");
  }

  // Refuse before any design runs: a GP surrogate has no Jacobian either.
  const bool gradients = problem.surrogate.policy == SurrogatePolicy::FitPoly ||
                         (problem.surrogate.policy == SurrogatePolicy::DirectForward && problem.forward.has_jacobian());
  if (!gradients && !problem.graph.finite_difference_fallback) {
    throw ConfigError(
        "NUTS needs gradients but the forward model has none: use a polynomial surrogate or enable the "
        "finite-difference fallback");
  }

  CalibrationResult res;
  res.hierarchical = hierarchical;
  for (const auto& p : problem.parameters) res.ranges.push_back(p.design_range(hierarchical));

  ForwardModel forward = problem.forward;
  NoiseModel noise = problem.noise;
  if (auto* inf = std::get_if<NoiseModel::Inferred>(&noise.sigma)) inf->transform = problem.scale_transform;
  GraphOptions graph_options = problem.graph;
  const auto& spec = problem.surrogate;
  if (spec.policy != SurrogatePolicy::DirectForward) {
    Rng design_rng = Rng::for_stream(problem.sampler.seed, kDesignStream);
    const SurrogateKind kind = spec.policy == SurrogatePolicy::FitPoly ? SurrogateKind::Poly : SurrogateKind::Gp;
    auto table = std::make_shared<const SurrogateTable>(fit_surrogate_table(
        problem.forward, data, res.ranges, spec.design_size, kind, spec.degree, design_rng, spec.gp));
    res.surrogate = table;
    forward = make_surrogate_forward(table, problem.forward.param_dim);
    if (kind == SurrogateKind::Gp) noise.code_variance = CodeVarianceSource::FromSurrogate;
  }

  std::vector<ParameterDecl> decls;
  for (const auto& p : problem.parameters) {
    if (hierarchical && p.per_group) {
      decls.push_back(ParameterDecl::hyper(mean_name(p.name), p.mean_prior));
      decls.push_back(ParameterDecl::hyper(sd_name(p.name), p.sd_prior, scale_transform(problem, p.sd_prior)));
      decls.push_back(ParameterDecl::per_group(p.name, mean_name(p.name), sd_name(p.name)));
    } else {
      decls.push_back(ParameterDecl::shared(p.name, p.prior));
    }
  }
  auto graph = std::make_shared<const ModelGraph>(
      ModelGraph::build(std::move(decls), data, std::move(forward), std::move(noise), graph_options));
  res.graph = graph;

  LogDensity target{graph->dimension(), [graph](std::span<const double> u, std::span<double> grad) {
                      return graph->log_posterior_and_gradient(u, grad);
                    }};

  // Starting points drawn from the priors, one stream per chain.
  const auto& coords = graph->coordinates();
  const auto& decl_list = graph->declarations();
  std::vector<Eigen::VectorXd> inits;
  for (std::size_t c = 0; c < problem.sampler.chains; ++c) {
    Rng rng = Rng::for_stream(problem.sampler.seed ^ kInitStream, c);
    std::vector<double> natural(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const auto& co = coords[i];
      switch (co.kind) {
        case CoordinateKind::Shared:
        case CoordinateKind::Hyper:
          natural[i] = decl_list[co.decl].prior->sample(rng);
          break;
        case CoordinateKind::PerGroup: {
          if (graph->options().parameterization == Parameterization::NonCentered) {
            natural[i] = rng.normal();
          } else {
            const auto& pg = std::get<role::PerGroup>(decl_list[co.decl].role);
            const double mu = natural[graph->index_of(pg.mean_parent)];
            const double sd = natural[graph->index_of(pg.sd_parent)];
            natural[i] = mu + sd * rng.normal();
          }
          break;
        }
        case CoordinateKind::NoiseSigma:
          natural[i] = std::get<NoiseModel::Inferred>(graph->noise().sigma).prior.sample(rng);
          break;
      }
    }
    inits.push_back(graph->to_unconstrained(natural));
  }

  ChainSet raw = nuts_sample(target, problem.sampler, inits, graph->coordinate_names());
  for (auto& m : raw.draws) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const Eigen::VectorXd u = m.row(r).transpose();
      m.row(r) = graph->to_natural({u.data(), static_cast<std::size_t>(u.size())}).transpose();
    }
  }
  res.chains = std::move(raw);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (coords[i].kind != CoordinateKind::PerGroup) keep.push_back(i);
  }
  res.summary = res.chains.select(keep);
  res.diagnostics = diagnostics(res.summary);

  for (const auto& p : problem.parameters) {
    if (hierarchical && p.per_group) {
      res.families.push_back({p.name, res.summary.index_of(mean_name(p.name)), res.summary.index_of(sd_name(p.name))});
    } else {
      res.shared_indices.push_back(res.summary.index_of(p.name));
    }
  }

  if (const auto rhat = res.diagnostics.max_rhat(); rhat && *rhat > 1.1) {
    res.status = CalibrationStatus::Failed;
    std::ostringstream msg;
    msg << "chains did not converge: max split R-hat " << *rhat << " exceeds 1.1";
    res.status_message = msg.str();
  }
  return res;
}

CalibrationResult run_hierarchical(const IuqProblem& problem, const ObservationSet& data) {
  return calibrate(problem, data, true);
}

CalibrationResult run_nonhierarchical(const IuqProblem& problem, const ObservationSet& data) {
  return calibrate(problem, data, false);
}

}  // namespace hbiuq
