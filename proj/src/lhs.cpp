#include <cmath>

#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

namespace {

double stratum_edge(const Bounds& b, std::size_t k, std::size_t n) {
  return b.lo + (b.hi - b.lo) * (static_cast<double>(k) / static_cast<double>(n));
}

}  // namespace

LhsDesign lhs_sample(std::size_t n, std::span<const Bounds> bounds, Rng& rng) {
  if (n == 0) throw ConfigError("LHS needs at least one point");
  if (bounds.empty()) throw ConfigError("LHS needs at least one dimension");
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi)) {
      throw ConfigError("LHS bounds must satisfy lo < hi");
    }
  }
  LhsDesign design{n, bounds.size(), {bounds.begin(), bounds.end()},
                   Eigen::MatrixXd(static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(bounds.size()))};
  const double dn = static_cast<double>(n);
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    const auto perm = rng.permutation(n);
    const double width = bounds[j].hi - bounds[j].lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform()) / dn;
      double x = bounds[j].lo + width * u;
      const double lower = stratum_edge(bounds[j], perm[i], n);
      const double upper = stratum_edge(bounds[j], perm[i] + 1, n);
      if (x < lower) x = lower;
      if (x >= upper) x = std::nextafter(upper, lower);
      design.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
    }
  }
  return design;
}

bool lhs_is_stratified(const LhsDesign& design) {
  const double dn = static_cast<double>(design.n);
  for (std::size_t j = 0; j < design.d; ++j) {
    std::vector<int> hits(design.n, 0);
    const auto& b = design.bounds[j];
    for (std::size_t i = 0; i < design.n; ++i) {
      const double x = design.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!(x >= b.lo && x < b.hi)) return false;
      auto k = static_cast<std::size_t>(std::floor((x - b.lo) / (b.hi - b.lo) * dn));
      if (k >= design.n) k = design.n - 1;
      while (k > 0 && x < stratum_edge(b, k, design.n)) --k;
      while (k + 1 < design.n && x >= stratum_edge(b, k + 1, design.n)) ++k;
      if (++hits[k] > 1) return false;
    }
  }
  return true;
}

}  // namespace hbiuq
