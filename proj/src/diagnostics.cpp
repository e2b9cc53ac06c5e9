#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq {

std::size_t ChainSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "' in the chains");
}

std::vector<double> ChainSet::column(std::size_t chain, std::size_t param) const {
  const auto& m = draws.at(chain);
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, static_cast<Eigen::Index>(param));
  return out;
}

std::vector<std::vector<double>> ChainSet::columns(std::size_t param) const {
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < chains(); ++c) out.push_back(column(c, param));
  return out;
}

std::vector<double> ChainSet::pooled(std::size_t param) const {
  std::vector<double> out;
  for (std::size_t c = 0; c < chains(); ++c) {
    const auto col = column(c, param);
    out.insert(out.end(), col.begin(), col.end());
  }
  return out;
}

ChainSet ChainSet::select(std::span<const std::size_t> params) const {
  ChainSet out;
  out.stats = stats;
  out.warnings = warnings;
  for (std::size_t p : params) out.names.push_back(names.at(p));
  for (const auto& m : draws) {
    Eigen::MatrixXd sub(m.rows(), static_cast<Eigen::Index>(params.size()));
    for (std::size_t j = 0; j < params.size(); ++j) {
      sub.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(params[j]));
    }
    out.draws.push_back(std::move(sub));
  }
  return out;
}

std::size_t ChainSet::total_divergences() const {
  std::size_t n = 0;
  for (const auto& s : stats) n += s.divergences;
  return n;
}

double ChainSet::mean_acceptance() const {
  if (stats.empty()) return 0.0;
  double a = 0.0;
  for (const auto& s : stats) a += s.mean_accept;
  return a / static_cast<double>(stats.size());
}

namespace {

// Each chain cut into a first and second half; an odd middle draw is dropped.
std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  if (half < 2) throw ConfigError("need at least 4 draws per chain for split diagnostics");
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

std::optional<double> rhat_of(const std::vector<std::vector<double>>& split) {
  const double n = static_cast<double>(split.front().size());
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(stats::mean(c));
    vars.push_back(stats::variance(c));
  }
  const double w = stats::mean(vars);
  const double b_over_n = stats::variance(means);
  if (w == 0.0) {
    return b_over_n == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

// Biased autocovariance at every lag, via zero-padded FFT.
std::vector<double> autocovariance(const std::vector<double>& x, double mean) {
  const std::size_t n = x.size();
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::norm(f);
  std::vector<double> back;
  fft.inv(back, freq);
  back.resize(n);
  for (auto& v : back) v /= static_cast<double>(n);
  return back;
}

// Multi-chain ESS with Geyer's initial positive and monotone sequences.
double ess_of(const std::vector<std::vector<double>>& split) {
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();
  std::vector<double> means(m), var0(m);
  std::vector<double> acov(n, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = stats::mean(split[c]);
    const auto a = autocovariance(split[c], means[c]);
    var0[c] = a[0] * static_cast<double>(n) / static_cast<double>(n - 1);
    for (std::size_t t = 0; t < n; ++t) acov[t] += a[t] / static_cast<double>(m);
  }
  const double w = stats::mean(var0);
  const double b_over_n = m > 1 ? stats::variance(means) : 0.0;
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;
  const double total = static_cast<double>(m) * nd;
  if (!(var_plus > 0.0)) return total;

  auto rho = [&](std::size_t t) { return 1.0 - (w - acov[t]) / var_plus; };

  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (double v : chains[c]) all.emplace_back(v, all.size());
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].first < all[b].first; });
  const double s = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && all[order[j]].first == all[order[i]].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of 1-based ranks i+1..j
    const double zval = stats::normal_quantile((rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k < j; ++k) z[order[k]] = zval;
    i = j;
  }
  std::vector<std::vector<double>> out;
  std::size_t pos = 0;
  for (const auto& c : chains) {
    out.emplace_back(z.begin() + static_cast<std::ptrdiff_t>(pos),
                     z.begin() + static_cast<std::ptrdiff_t>(pos + c.size()));
    pos += c.size();
  }
  return out;
}

}  // namespace

std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) return std::nullopt;
  return rhat_of(split_chains(chains));
}

double ess(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("ess: no chains");
  return ess_of(split_chains(chains));
}

double bulk_ess(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("bulk_ess: no chains");
  return ess_of(split_chains(rank_normalize(chains)));
}

const ParameterSummary& DiagnosticsReport::at(std::string_view name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return p;
  }
  throw ConfigError("no summary for parameter '" + std::string(name) + "'");
}

std::optional<double> DiagnosticsReport::max_rhat(std::span<const std::string> names) const {
  std::optional<double> best;
  auto consider = [&](const ParameterSummary& p) {
    if (p.rhat) best = best ? std::max(*best, *p.rhat) : *p.rhat;
  };
  if (names.empty()) {
    for (const auto& p : parameters) consider(p);
  } else {
    for (const auto& n : names) consider(at(n));
  }
  return best;
}

double DiagnosticsReport::min_ess(std::span<const std::string> names) const {
  double best = std::numeric_limits<double>::infinity();
  if (names.empty()) {
    for (const auto& p : parameters) best = std::min(best, p.ess_bulk);
  } else {
    for (const auto& n : names) best = std::min(best, at(n).ess_bulk);
  }
  return best;
}

DiagnosticsReport diagnostics(const ChainSet& chains) {
  DiagnosticsReport r;
  r.chains = chains.chains();
  r.draws_per_chain = chains.kept();
  r.acceptance_rate = chains.mean_acceptance();
  r.divergences = chains.total_divergences();
  r.warnings = chains.warnings;
  for (std::size_t p = 0; p < chains.dim(); ++p) {
    const auto cols = chains.columns(p);
    auto pooled = chains.pooled(p);
    ParameterSummary s;
    s.name = chains.names[p];
    s.mean = stats::mean(pooled);
    s.sd = stats::sd(pooled);
    std::sort(pooled.begin(), pooled.end());
    s.q025 = stats::quantile_sorted(pooled, 0.025);
    s.q05 = stats::quantile_sorted(pooled, 0.05);
    s.q25 = stats::quantile_sorted(pooled, 0.25);
    s.q50 = stats::quantile_sorted(pooled, 0.50);
    s.q75 = stats::quantile_sorted(pooled, 0.75);
    s.q95 = stats::quantile_sorted(pooled, 0.95);
    s.q975 = stats::quantile_sorted(pooled, 0.975);
    s.rhat = split_rhat(cols);
    s.ess_bulk = bulk_ess(cols);
    r.parameters.push_back(std::move(s));
  }
  return r;
}

}  // namespace hbiuq
