#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hbiuq {

/// xoshiro256** generator seeded through splitmix64.
///
/// The draw sequence is a pure function of the seed on every platform; the
/// normal and uniform transforms below never go through <random>'s
/// implementation-defined distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for worker `index` (chain, replicate, ...).
  static Rng for_stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1).
  double uniform_open();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Normal {
  double mean;
  double sd;
};

/// Support is the open interval (lo, hi).
struct Uniform {
  double lo;
  double hi;
};

/// One-dimensional probability law. Construction validates parameters, so a
/// Distribution object is always well formed.
class Distribution {
 public:
  static Distribution normal(double mean, double sd);
  static Distribution uniform(double lo, double hi);

  bool is_normal() const { return std::holds_alternative<Normal>(law_); }
  bool is_uniform() const { return std::holds_alternative<Uniform>(law_); }
  const Normal& as_normal() const { return std::get<Normal>(law_); }
  const Uniform& as_uniform() const { return std::get<Uniform>(law_); }

  double log_pdf(double x) const;
  /// d/dx log p(x). Throws DomainError for a Uniform at or outside its bounds.
  double grad_log_pdf(double x) const;
  double cdf(double x) const;
  double mean() const;
  double sd() const;
  /// Inside the support (open interval for Uniform, whole line for Normal).
  bool in_support(double x) const;

  double sample(Rng& rng) const;
  std::vector<double> sample(Rng& rng, std::size_t n) const;

  std::string describe() const;

  friend bool operator==(const Distribution& a, const Distribution& b);

 private:
  explicit Distribution(std::variant<Normal, Uniform> law) : law_(law) {}
  std::variant<Normal, Uniform> law_;
};

bool operator==(const Normal& a, const Normal& b);
bool operator==(const Uniform& a, const Uniform& b);

}  // namespace hbiuq
