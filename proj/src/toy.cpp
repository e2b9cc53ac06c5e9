#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"

namespace hbiuq {

namespace {

double draw(const ToyPopulation& law, Rng& rng) { return law.mean + law.sd * rng.normal(); }

void add_group(ObservationSet& obs, std::size_t group, const std::vector<double>& x, double a, double b, double t,
               double noise_sd, Rng& rng) {
  for (double xi : x) {
    const double y = a * xi * xi + b * xi + t + noise_sd * rng.normal();
    obs.add(group, {&xi, 1}, {&y, 1});
  }
}

}  // namespace

ToyData generate_toy_data(const ToyOptions& options, Rng& rng) {
  if (options.groups == 0 || options.per_group == 0) throw ConfigError("toy data needs groups and points per group");
  if (options.noise_sd < 0.0 || options.alpha.sd < 0.0 || options.beta.sd < 0.0 || options.theta.sd < 0.0) {
    throw ConfigError("toy standard deviations must be non-negative");
  }
  ToyData data{ObservationSet(1, 1), Eigen::MatrixXd(static_cast<Eigen::Index>(options.groups), 3), options.x};
  if (data.x.empty()) {
    const std::size_t n = options.per_group;
    for (std::size_t j = 0; j < n; ++j) {
      data.x.push_back(n == 1 ? 0.0 : -2.0 + 4.0 * static_cast<double>(j) / static_cast<double>(n - 1));
    }
  } else if (data.x.size() != options.per_group) {
    throw ConfigError("toy x grid length must equal points per group");
  }
  for (std::size_t g = 0; g < options.groups; ++g) {
    const double a = draw(options.alpha, rng);
    const double b = draw(options.beta, rng);
    const double t = draw(options.theta, rng);
    const auto gi = static_cast<Eigen::Index>(g);
    data.truth(gi, 0) = a;
    data.truth(gi, 1) = b;
    data.truth(gi, 2) = t;
    add_group(data.observations, g, data.x, a, b, t, options.noise_sd, rng);
  }
  return data;
}

void inject_outlier_group(ToyData& data, const ToyOptions& options, double shift_sds, Rng& rng) {
  const std::size_t g = data.observations.group_count();
  const double a = options.alpha.mean + shift_sds * options.alpha.sd;
  const double b = options.beta.mean + shift_sds * options.beta.sd;
  const double t = options.theta.mean + shift_sds * options.theta.sd;
  add_group(data.observations, g, data.x, a, b, t, options.noise_sd, rng);
  data.truth.conservativeResize(data.truth.rows() + 1, Eigen::NoChange);
  data.truth.row(data.truth.rows() - 1) << a, b, t;
}

}  // namespace hbiuq
