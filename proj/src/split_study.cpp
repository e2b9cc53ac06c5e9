#include <algorithm>
#include <limits>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq {

double SplitReport::max_distance() const {
  double m = 0.0;
  for (const auto& s : splits) {
    for (const auto& c : s.comparisons) m = std::max(m, c.normalized_distance);
  }
  return m;
}

std::vector<std::vector<std::size_t>> random_half_splits(std::size_t groups, std::size_t splits, Rng& rng) {
  if (groups < 2) throw ConfigError("need at least two groups to split the data");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < splits; ++s) {
    auto perm = rng.permutation(groups);
    perm.resize(groups / 2);
    std::sort(perm.begin(), perm.end());
    out.push_back(std::move(perm));
  }
  return out;
}

SplitReport dataset_split_study(const IuqProblem& problem, const ObservationSet& data, bool hierarchical,
                                std::size_t splits, Rng& rng, const CalibrationResult* full) {
  if (data.empty()) throw ConfigError("cannot split an empty dataset");
  return dataset_split_study(problem, data, hierarchical, random_half_splits(data.group_count(), splits, rng), full);
}

SplitReport dataset_split_study(const IuqProblem& problem, const ObservationSet& data, bool hierarchical,
                                const std::vector<std::vector<std::size_t>>& first_halves,
                                const CalibrationResult* full) {
  if (data.empty()) throw ConfigError("cannot split an empty dataset");
  const std::size_t groups = data.group_count();
  CalibrationResult own;
  if (!full) {
    own = calibrate(problem, data, hierarchical);
    full = &own;
  }
  std::vector<std::string> names, coords;
  for (const auto& p : problem.parameters) {
    names.push_back(p.name);
    coords.push_back(hierarchical && p.per_group ? mean_name(p.name) : p.name);
  }

  SplitReport rep;
  rep.hierarchical = hierarchical;
  for (const auto& first : first_halves) {
    std::vector<bool> in_first(groups, false);
    for (std::size_t g : first) {
      if (g >= groups) throw ConfigError("split references a group that does not exist");
      in_first[g] = true;
    }
    std::vector<std::size_t> second;
    for (std::size_t g = 0; g < groups; ++g) {
      if (!in_first[g]) second.push_back(g);
    }
    if (first.empty() || second.empty()) throw ConfigError("both halves of a split need at least one group");
    const CalibrationResult a = calibrate(problem, data.subset_groups(first), hierarchical);
    const CalibrationResult b = calibrate(problem, data.subset_groups(second), hierarchical);
    SplitRun run;
    run.first_half = first;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto da = a.summary.pooled(a.summary.index_of(coords[i]));
      const auto db = b.summary.pooled(b.summary.index_of(coords[i]));
      const auto df = full->summary.pooled(full->summary.index_of(coords[i]));
      const double sd = stats::sd(df);
      const double w = stats::wasserstein1(da, db);
      run.comparisons.push_back({names[i], sd > 0.0 ? w / sd : (w > 0.0 ? std::numeric_limits<double>::infinity() : 0.0)});
    }
    rep.splits.push_back(std::move(run));
  }
  return rep;
}

}  // namespace hbiuq
