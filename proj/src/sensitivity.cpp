#include "hbiuq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq {

namespace {

std::vector<std::string> input_names(std::vector<std::string> names, std::size_t d) {
  if (names.empty()) {
    for (std::size_t i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
  }
  if (names.size() != d) throw ConfigError("parameter name count does not match the number of inputs");
  return names;
}

void check_bounds(std::span<const Bounds> bounds) {
  if (bounds.empty()) throw ConfigError("no input parameters");
  for (const auto& b : bounds) {
    if (!(b.hi > b.lo) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
      throw ConfigError("input ranges must be finite with lo < hi");
    }
  }
}

}  // namespace

std::vector<std::size_t> ScreeningResult::selected_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) out.push_back(i);
  }
  return out;
}

ScreeningResult oat_screen(const VectorFunction& f, std::span<const Bounds> bounds,
                           std::span<const double> nominal, std::size_t n, double threshold, Rng& rng,
                           std::vector<std::string> names) {
  check_bounds(bounds);
  if (n < 2) throw ConfigError("screening needs at least 2 sweep values per parameter");
  if (!(threshold >= 0.0)) throw ConfigError("screening threshold must be non-negative");
  const std::size_t d = bounds.size();
  std::vector<double> base(d);
  if (nominal.empty()) {
    for (std::size_t i = 0; i < d; ++i) base[i] = 0.5 * (bounds[i].lo + bounds[i].hi);
  } else {
    if (nominal.size() != d) throw ConfigError("nominal point has the wrong dimension");
    base.assign(nominal.begin(), nominal.end());
  }

  ScreeningResult res;
  res.names = input_names(std::move(names), d);
  res.threshold = threshold;
  res.sweep_size = n;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<stats::Welford> acc;
    std::vector<double> x = base;
    for (std::size_t s = 0; s < n; ++s) {
      x[i] = rng.uniform(bounds[i].lo, bounds[i].hi);
      Eigen::VectorXd y;
      try {
        y = f(x);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "screening " << res.names[i] << " at " << x[i] << ": " << e.what();
        throw EvaluationError(msg.str());
      }
      if (!y.allFinite()) {
        std::ostringstream msg;
        msg << "screening " << res.names[i] << " at " << x[i] << ": non-finite output";
        throw EvaluationError(msg.str());
      }
      if (acc.empty()) acc.resize(static_cast<std::size_t>(y.size()));
      if (acc.size() != static_cast<std::size_t>(y.size())) throw EvaluationError("output size changed between runs");
      for (Eigen::Index k = 0; k < y.size(); ++k) acc[static_cast<std::size_t>(k)].push(y[k]);
    }
    if (i == 0) res.output_variance.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(acc.size()));
    double worst = 0.0;
    for (std::size_t k = 0; k < acc.size(); ++k) {
      const double v = acc[k].variance();
      res.output_variance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
      worst = std::max(worst, v);
    }
    res.variance.push_back(worst);
    res.selected.push_back(worst > threshold);
  }
  return res;
}

namespace {

struct Estimates {
  Eigen::MatrixXd s1, st;  // d x q
};

// fa, fb: N x q. fab[i]: N x q. rows: which base rows enter the estimate.
Estimates jansen(const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb, const std::vector<Eigen::MatrixXd>& fab,
                 std::span<const std::size_t> rows, bool throw_on_zero) {
  const auto d = static_cast<Eigen::Index>(fab.size());
  const Eigen::Index q = fa.cols();
  const double n = static_cast<double>(rows.size());
  Estimates e{Eigen::MatrixXd(d, q), Eigen::MatrixXd(d, q)};
  for (Eigen::Index k = 0; k < q; ++k) {
    // Total variance over the pooled A and B evaluations.
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t r : rows) {
      const auto ri = static_cast<Eigen::Index>(r);
      sum += fa(ri, k) + fb(ri, k);
    }
    const double mean = sum / (2.0 * n);
    for (std::size_t r : rows) {
      const auto ri = static_cast<Eigen::Index>(r);
      sum2 += (fa(ri, k) - mean) * (fa(ri, k) - mean) + (fb(ri, k) - mean) * (fb(ri, k) - mean);
    }
    const double var = sum2 / (2.0 * n - 1.0);
    if (!(var > 0.0)) {
      if (throw_on_zero) {
        throw ZeroVarianceError("output " + std::to_string(k) +
                                " has zero variance; Sobol indices are undefined");
      }
      e.s1.col(k).setConstant(std::nan(""));
      e.st.col(k).setConstant(std::nan(""));
      continue;
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& fi = fab[static_cast<std::size_t>(i)];
      double first = 0.0, total = 0.0;
      for (std::size_t r : rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        const double db = fb(ri, k) - fi(ri, k);
        const double da = fa(ri, k) - fi(ri, k);
        first += db * db;
        total += da * da;
      }
      e.s1(i, k) = (var - first / (2.0 * n)) / var;
      e.st(i, k) = total / (2.0 * n) / var;
    }
  }
  return e;
}

}  // namespace

SobolResult sobol_indices(const VectorFunction& f, std::span<const Bounds> bounds, std::size_t n, Rng& rng,
                          std::size_t bootstrap, std::vector<std::string> names) {
  check_bounds(bounds);
  if (n < 100) throw ConfigError("Sobol estimation needs a base sample of at least 100");
  const std::size_t d = bounds.size();
  const auto nn = static_cast<Eigen::Index>(n);
  const auto dd = static_cast<Eigen::Index>(d);

  SobolResult res;
  res.names = input_names(std::move(names), d);
  res.n = n;
  res.bootstrap = bootstrap;

  Eigen::MatrixXd a(nn, dd), b(nn, dd);
  for (Eigen::Index r = 0; r < nn; ++r) {
    for (Eigen::Index j = 0; j < dd; ++j) a(r, j) = rng.uniform(bounds[static_cast<std::size_t>(j)].lo, bounds[static_cast<std::size_t>(j)].hi);
  }
  for (Eigen::Index r = 0; r < nn; ++r) {
    for (Eigen::Index j = 0; j < dd; ++j) b(r, j) = rng.uniform(bounds[static_cast<std::size_t>(j)].lo, bounds[static_cast<std::size_t>(j)].hi);
  }

  std::size_t calls = 0;
  auto run = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out;
    std::vector<double> row(d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index j = 0; j < dd; ++j) row[static_cast<std::size_t>(j)] = x(r, j);
      Eigen::VectorXd y;
      ++calls;
      try {
        y = f(row);
      } catch (const EvaluationError&) {
        throw;
      } catch (const Error& e) {
        throw EvaluationError("Sobol design run failed: " + std::string(e.what()), static_cast<long>(r));
      }
      if (!y.allFinite()) throw EvaluationError("Sobol design run returned a non-finite value", static_cast<long>(r));
      if (r == 0) out.resize(x.rows(), y.size());
      out.row(r) = y.transpose();
    }
    return out;
  };

  const Eigen::MatrixXd fa = run(a);
  const Eigen::MatrixXd fb = run(b);
  std::vector<Eigen::MatrixXd> fab;
  for (Eigen::Index i = 0; i < dd; ++i) {
    Eigen::MatrixXd ab = a;
    ab.col(i) = b.col(i);
    fab.push_back(run(ab));
  }
  res.evaluations = calls;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Estimates est = jansen(fa, fb, fab, all, true);
  res.s1 = est.s1;
  res.st = est.st;

  const Eigen::Index q = fa.cols();
  res.s1_se = Eigen::MatrixXd::Zero(dd, q);
  res.st_se = Eigen::MatrixXd::Zero(dd, q);
  if (bootstrap >= 2) {
    Eigen::MatrixXd s1_sum = Eigen::MatrixXd::Zero(dd, q), s1_sq = s1_sum, st_sum = s1_sum, st_sq = s1_sum;
    std::vector<std::size_t> rows(n);
    double used = 0.0;
    for (std::size_t rep = 0; rep < bootstrap; ++rep) {
      for (auto& r : rows) r = rng.index(n);
      const Estimates bs = jansen(fa, fb, fab, rows, false);
      if (!bs.s1.allFinite() || !bs.st.allFinite()) continue;
      s1_sum += bs.s1;
      s1_sq += bs.s1.cwiseProduct(bs.s1);
      st_sum += bs.st;
      st_sq += bs.st.cwiseProduct(bs.st);
      used += 1.0;
    }
    if (used >= 2.0) {
      auto sd = [&](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sq) {
        Eigen::MatrixXd var = (sq - sum.cwiseProduct(sum) / used) / (used - 1.0);
        return var.cwiseMax(0.0).cwiseSqrt().eval();
      };
      res.s1_se = sd(s1_sum, s1_sq);
      res.st_se = sd(st_sum, st_sq);
    }
  }
  return res;
}

std::vector<std::size_t> rank_and_select(const SobolResult& result, std::optional<std::size_t> k,
                                         std::optional<double> threshold) {
  const std::size_t d = result.input_dim();
  std::vector<double> score(d);
  for (std::size_t i = 0; i < d; ++i) score[i] = result.st.row(static_cast<Eigen::Index>(i)).maxCoeff();
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  if (threshold) {
    std::erase_if(order, [&](std::size_t i) { return !(score[i] > *threshold); });
  }
  if (k && *k < order.size()) order.resize(*k);
  return order;
}

}  // namespace hbiuq
