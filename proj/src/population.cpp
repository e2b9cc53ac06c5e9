#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq {

PopulationPosterior resample_population(const ChainSet& chains, const std::vector<FamilyRef>& families,
                                        std::size_t n_pop, Rng& rng) {
  if (families.empty()) throw ConfigError("no per-group families to resample");
  if (n_pop < 2) throw ConfigError("population resampling needs at least 2 draws");
  const std::size_t f = families.size();
  std::vector<std::vector<double>> means, sds;
  for (const auto& fam : families) {
    means.push_back(chains.pooled(fam.mean_index));
    sds.push_back(chains.pooled(fam.sd_index));
  }
  const std::size_t total = means.front().size();
  if (total == 0) throw ConfigError("no posterior draws to resample");

  PopulationPosterior pop;
  pop.draws.resize(static_cast<Eigen::Index>(n_pop), static_cast<Eigen::Index>(f));
  for (std::size_t s = 0; s < n_pop; ++s) {
    const std::size_t j = rng.index(total);
    for (std::size_t k = 0; k < f; ++k) {
      pop.draws(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = means[k][j] + sds[k][j] * rng.normal();
    }
  }
  for (std::size_t k = 0; k < f; ++k) {
    pop.families.push_back(families[k].name);
    const Eigen::VectorXd col = pop.draws.col(static_cast<Eigen::Index>(k));
    const std::span<const double> v{col.data(), n_pop};
    pop.fitted.push_back({stats::mean(v), stats::sd(v)});
  }
  pop.correlation = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(f));
  for (std::size_t a = 0; a < f; ++a) {
    for (std::size_t b = a + 1; b < f; ++b) {
      const double r = stats::correlation(means[a], means[b]);
      pop.correlation(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = r;
      pop.correlation(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = r;
    }
  }
  return pop;
}

}  // namespace hbiuq
