#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hbiuq::stats {

double mean(std::span<const double> x);
/// Unbiased (n-1) sample variance; zero for n < 2.
double variance(std::span<const double> x);
double sd(std::span<const double> x);

/// Running mean/variance. Identical inputs give exactly zero variance.
class Welford {
 public:
  void push(double x);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Linear-interpolation quantile (Hyndman-Fan type 7) of unsorted data.
double quantile(std::span<const double> x, double p);
/// Same, on data already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double p);

double correlation(std::span<const double> x, std::span<const double> y);

double normal_quantile(double p);

/// 1-Wasserstein distance between the empirical laws of two samples.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
double ks_statistic(std::span<const double> x, const std::function<double(double)>& cdf);

}  // namespace hbiuq::stats
