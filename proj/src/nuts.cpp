#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/stats.hpp"
#include "sampler_internal.hpp"

namespace hbiuq {

void NutsConfig::validate() const {
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target acceptance must lie in (0, 1)");
  if (max_tree_depth == 0 || max_tree_depth > 30) throw ConfigError("max tree depth must lie in [1, 30]");
  if (chains == 0) throw ConfigError("need at least one chain");
  if (burn_in >= draws) throw ConfigError("burn-in must be smaller than the number of iterations");
  if (adaptation() > burn_in) throw ConfigError("adaptation steps cannot exceed burn-in");
  if (!(max_energy_error > 0.0)) throw ConfigError("max energy error must be positive");
}

namespace {

using detail::PhasePoint;

struct Subtree {
  PhasePoint minus;
  PhasePoint plus;
  PhasePoint proposal;
  double n = 0.0;
  bool s = true;
  double alpha = 0.0;
  double n_alpha = 0.0;
  bool divergent = false;
};

class NutsChain {
 public:
  NutsChain(const LogDensity& target, const NutsConfig& cfg, Rng rng)
      : target_(target), cfg_(cfg), rng_(std::move(rng)),
        inv_mass_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(target.dim))) {}

  struct Result {
    Eigen::MatrixXd kept;
    ChainStats stats;
  };

  Result run(const Eigen::VectorXd& init);

 private:
  double joint(const PhasePoint& z) const { return z.logp - detail::kinetic(z.p, inv_mass_); }

  Eigen::VectorXd sample_momentum() {
    Eigen::VectorXd p(inv_mass_.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
    return p;
  }

  bool no_uturn(const PhasePoint& minus, const PhasePoint& plus) const {
    const Eigen::VectorXd dq = plus.q - minus.q;
    return dq.dot(inv_mass_.cwiseProduct(minus.p)) >= 0.0 && dq.dot(inv_mass_.cwiseProduct(plus.p)) >= 0.0;
  }

  Subtree build(const PhasePoint& start, double log_u, int v, std::size_t depth, double eps,
                double joint0);
  double find_reasonable_step(const PhasePoint& z);

  const LogDensity& target_;
  const NutsConfig& cfg_;
  Rng rng_;
  Eigen::VectorXd inv_mass_;
  std::size_t evals_ = 0;
};

Subtree NutsChain::build(const PhasePoint& start, double log_u, int v, std::size_t depth, double eps,
                         double joint0) {
  if (depth == 0) {
    Subtree t;
    PhasePoint z = start;
    const bool ok = detail::leapfrog_step(target_, z, v * eps, inv_mass_);
    ++evals_;
    const double h = ok ? joint(z) : -std::numeric_limits<double>::infinity();
    const bool finite = std::isfinite(h);
    t.n = (finite && log_u <= h) ? 1.0 : 0.0;
    t.s = finite && log_u < h + cfg_.max_energy_error;
    t.divergent = !t.s;
    t.alpha = finite ? std::min(1.0, std::exp(h - joint0)) : 0.0;
    t.n_alpha = 1.0;
    if (!ok) z = start;  // keep the tree endpoints usable; s is already false
    t.minus = z;
    t.plus = z;
    t.proposal = std::move(z);
    return t;
  }
  Subtree t = build(start, log_u, v, depth - 1, eps, joint0);
  if (!t.s) return t;
  const PhasePoint& edge = v < 0 ? t.minus : t.plus;
  Subtree t2 = build(edge, log_u, v, depth - 1, eps, joint0);
  if (v < 0) {
    t.minus = std::move(t2.minus);
  } else {
    t.plus = std::move(t2.plus);
  }
  const double total = t.n + t2.n;
  if (total > 0.0 && rng_.uniform() < t2.n / total) t.proposal = std::move(t2.proposal);
  t.alpha += t2.alpha;
  t.n_alpha += t2.n_alpha;
  t.divergent = t.divergent || t2.divergent;
  t.s = t2.s && no_uturn(t.minus, t.plus);
  t.n = total;
  return t;
}

double NutsChain::find_reasonable_step(const PhasePoint& z0) {
  double eps = 1.0;
  auto log_ratio = [&](double e) {
    PhasePoint z = z0;
    z.p = sample_momentum();
    const double h0 = joint(z);
    const bool ok = detail::leapfrog_step(target_, z, e, inv_mass_);
    ++evals_;
    if (!ok) return -std::numeric_limits<double>::infinity();
    const double h1 = joint(z);
    return std::isfinite(h1) ? h1 - h0 : -std::numeric_limits<double>::infinity();
  };
  double lr = log_ratio(eps);
  const double a = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; it < 100 && a * lr > -a * std::log(2.0); ++it) {
    eps *= std::pow(2.0, a);
    lr = log_ratio(eps);
  }
  return eps;
}

// Adaptation windows for the diagonal mass matrix: fast initial buffer, a
// sequence of doubling slow windows, then a fast terminal buffer.
struct MassWindows {
  std::size_t init_buffer = 0;
  std::vector<std::size_t> ends;
};

MassWindows mass_windows(std::size_t adapt) {
  MassWindows w;
  if (adapt < 20) return w;
  std::size_t init_buffer = 75, term_buffer = 50, window = 25;
  if (adapt < init_buffer + term_buffer + window) {
    init_buffer = adapt * 15 / 100;
    term_buffer = adapt / 10;
    window = adapt - init_buffer - term_buffer;
  }
  w.init_buffer = init_buffer;
  std::size_t start = init_buffer;
  const std::size_t last = adapt - term_buffer;
  while (start < last) {
    std::size_t end = start + window;
    if (end + 2 * window > last) end = last;
    w.ends.push_back(end);
    start = end;
    window *= 2;
  }
  return w;
}

NutsChain::Result NutsChain::run(const Eigen::VectorXd& init) {
  const auto dim = static_cast<Eigen::Index>(target_.dim);
  PhasePoint current{init, Eigen::VectorXd::Zero(dim), {}, 0.0};
  current.logp = detail::evaluate(target_, current.q, current.grad);
  ++evals_;
  if (!std::isfinite(current.logp)) throw ConfigError("NUTS initial point is outside the support");

  const double delta = cfg_.target_accept;
  constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  const std::size_t adapt = cfg_.adaptation();

  double eps = cfg_.initial_step_size > 0.0 ? cfg_.initial_step_size : find_reasonable_step(current);
  double mu = std::log(10.0 * eps);
  double h_bar = 0.0, log_eps_bar = 0.0;
  std::size_t da_iter = 0;

  const MassWindows windows = cfg_.adapt_mass_matrix ? mass_windows(adapt) : MassWindows{};
  std::size_t next_window = 0;
  std::vector<stats::Welford> mass_acc(static_cast<std::size_t>(dim));

  Result res;
  const std::size_t n_kept = cfg_.draws - cfg_.burn_in;
  res.kept.resize(static_cast<Eigen::Index>(n_kept), dim);
  double accept_sum = 0.0, depth_sum = 0.0;

  for (std::size_t m = 1; m <= cfg_.draws; ++m) {
    current.p = sample_momentum();
    const double joint0 = joint(current);
    const double log_u = joint0 + std::log(rng_.uniform_open());

    PhasePoint minus = current, plus = current;
    double n = 1.0;
    bool s = true;
    std::size_t depth = 0;
    double alpha = 0.0, n_alpha = 0.0;
    bool divergent = false;
    while (s) {
      const int v = rng_.uniform() < 0.5 ? -1 : 1;
      Subtree t = build(v < 0 ? minus : plus, log_u, v, depth, eps, joint0);
      if (v < 0) {
        minus = std::move(t.minus);
      } else {
        plus = std::move(t.plus);
      }
      if (t.s && rng_.uniform() < t.n / n) current = std::move(t.proposal);
      n += t.n;
      alpha += t.alpha;
      n_alpha += t.n_alpha;
      divergent = divergent || t.divergent;
      s = t.s && no_uturn(minus, plus);
      ++depth;
      if (depth >= cfg_.max_tree_depth) break;
    }
    const double accept_stat = n_alpha > 0.0 ? alpha / n_alpha : 0.0;

    if (m <= adapt) {
      ++da_iter;
      const double it = static_cast<double>(da_iter);
      h_bar = (1.0 - 1.0 / (it + t0)) * h_bar + (delta - accept_stat) / (it + t0);
      const double log_eps = mu - std::sqrt(it) / gamma * h_bar;
      const double eta = std::pow(it, -kappa);
      log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
      eps = std::exp(log_eps);

      if (next_window < windows.ends.size()) {
        if (m > windows.init_buffer) {
          for (Eigen::Index i = 0; i < dim; ++i) mass_acc[static_cast<std::size_t>(i)].push(current.q[i]);
        }
        if (m == windows.ends[next_window]) {
          for (Eigen::Index i = 0; i < dim; ++i) {
            auto& w = mass_acc[static_cast<std::size_t>(i)];
            const double cnt = static_cast<double>(w.count());
            if (cnt >= 2.0) {
              inv_mass_[i] = (cnt / (cnt + 5.0)) * w.variance() + 1e-3 * (5.0 / (cnt + 5.0));
            }
            w = stats::Welford{};
          }
          ++next_window;
          eps = find_reasonable_step(current);
          mu = std::log(10.0 * eps);
          h_bar = 0.0;
          log_eps_bar = 0.0;
          da_iter = 0;
        }
      }
      if (m == adapt) eps = std::exp(log_eps_bar);
    }

    if (m > cfg_.burn_in) {
      const auto row = static_cast<Eigen::Index>(m - cfg_.burn_in - 1);
      res.kept.row(row) = current.q.transpose();
      accept_sum += accept_stat;
      depth_sum += static_cast<double>(depth);
      if (divergent) ++res.stats.divergences;
      if (depth >= cfg_.max_tree_depth) ++res.stats.max_depth_hits;
    }
  }
  res.stats.mean_accept = accept_sum / static_cast<double>(n_kept);
  res.stats.mean_tree_depth = depth_sum / static_cast<double>(n_kept);
  res.stats.step_size = eps;
  res.stats.gradient_evaluations = evals_;
  return res;
}

}  // namespace

ChainSet nuts_sample(const LogDensity& target, const NutsConfig& config,
                     std::span<const Eigen::VectorXd> inits, std::vector<std::string> names) {
  config.validate();
  const auto starts = detail::broadcast_inits(inits, config.chains, target.dim);
  ChainSet out;
  out.names = detail::default_names(std::move(names), target.dim);
  std::vector<NutsChain::Result> results(config.chains);
  detail::run_chains(config.chains, config.parallel, [&](std::size_t c) {
    NutsChain chain(target, config, Rng::for_stream(config.seed, c));
    results[c] = chain.run(starts[c]);
  });
  const double kept = static_cast<double>(config.draws - config.burn_in);
  for (std::size_t c = 0; c < config.chains; ++c) {
    const auto& st = results[c].stats;
    const double depth_rate = static_cast<double>(st.max_depth_hits) / kept;
    const double div_rate = static_cast<double>(st.divergences) / kept;
    if (depth_rate > 0.10) {
      std::ostringstream msg;
      msg << "chain " << c << ": " << depth_rate * 100.0 << "% of transitions hit the maximum tree depth "
          << config.max_tree_depth;
      out.warnings.push_back(msg.str());
    }
    if (div_rate > 0.01) {
      std::ostringstream msg;
      msg << "chain " << c << ": " << st.divergences << " divergent transitions after adaptation ("
          << div_rate * 100.0 << "%)";
      out.warnings.push_back(msg.str());
    }
    out.draws.push_back(std::move(results[c].kept));
    out.stats.push_back(st);
  }
  return out;
}

}  // namespace hbiuq
