#include "hbiuq/prob.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hbiuq/error.hpp"

namespace hbiuq {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

Rng Rng::for_stream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed ^ (0xd1b54a32d192ed03ULL * (index + 1));
  Rng rng(splitmix64(x));
  rng.seed_ = seed;
  return rng;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

namespace {
__extension__ typedef unsigned __int128 u128;
}

std::uint64_t Rng::index(std::uint64_t n) {
  // Lemire's nearly-divisionless method with rejection.
  u128 m = static_cast<u128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<u128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(index(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

bool operator==(const Normal& a, const Normal& b) {
  return a.mean == b.mean && a.sd == b.sd;
}
bool operator==(const Uniform& a, const Uniform& b) {
  return a.lo == b.lo && a.hi == b.hi;
}
bool operator==(const Distribution& a, const Distribution& b) { return a.law_ == b.law_; }

Distribution Distribution::normal(double mean, double sd) {
  if (!std::isfinite(mean) || !std::isfinite(sd) || !(sd > 0.0)) {
    throw ConfigError("Normal distribution needs finite mean and sd > 0");
  }
  return Distribution(Normal{mean, sd});
}

Distribution Distribution::uniform(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw ConfigError("Uniform distribution needs finite bounds with lo < hi");
  }
  return Distribution(Uniform{lo, hi});
}

bool Distribution::in_support(double x) const {
  if (const auto* u = std::get_if<Uniform>(&law_)) return x > u->lo && x < u->hi;
  return std::isfinite(x);
}

double Distribution::log_pdf(double x) const {
  if (const auto* n = std::get_if<Normal>(&law_)) {
    const double z = (x - n->mean) / n->sd;
    return -kHalfLog2Pi - std::log(n->sd) - 0.5 * z * z;
  }
  const auto& u = std::get<Uniform>(law_);
  if (!(x > u.lo && x < u.hi)) return -std::numeric_limits<double>::infinity();
  return -std::log(u.hi - u.lo);
}

double Distribution::grad_log_pdf(double x) const {
  if (const auto* n = std::get_if<Normal>(&law_)) {
    return -(x - n->mean) / (n->sd * n->sd);
  }
  const auto& u = std::get<Uniform>(law_);
  if (!(x > u.lo && x < u.hi)) {
    std::ostringstream msg;
    msg << "log-density of " << describe() << " is not differentiable at " << x;
    throw DomainError(msg.str());
  }
  return 0.0;
}

double Distribution::cdf(double x) const {
  if (const auto* n = std::get_if<Normal>(&law_)) {
    return 0.5 * std::erfc(-(x - n->mean) / (n->sd * std::numbers::sqrt2));
  }
  const auto& u = std::get<Uniform>(law_);
  if (x <= u.lo) return 0.0;
  if (x >= u.hi) return 1.0;
  return (x - u.lo) / (u.hi - u.lo);
}

double Distribution::mean() const {
  if (const auto* n = std::get_if<Normal>(&law_)) return n->mean;
  const auto& u = std::get<Uniform>(law_);
  return 0.5 * (u.lo + u.hi);
}

double Distribution::sd() const {
  if (const auto* n = std::get_if<Normal>(&law_)) return n->sd;
  const auto& u = std::get<Uniform>(law_);
  return (u.hi - u.lo) / std::sqrt(12.0);
}

double Distribution::sample(Rng& rng) const {
  if (const auto* n = std::get_if<Normal>(&law_)) return rng.normal(n->mean, n->sd);
  const auto& u = std::get<Uniform>(law_);
  // Open interval: never return the lower bound.
  return u.lo + (u.hi - u.lo) * rng.uniform_open();
}

std::vector<double> Distribution::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out(n);
  for (auto& v : out) v = sample(rng);
  return out;
}

std::string Distribution::describe() const {
  std::ostringstream s;
  if (const auto* n = std::get_if<Normal>(&law_)) {
    s << "Normal(" << n->mean << ", " << n->sd << ")";
  } else {
    const auto& u = std::get<Uniform>(law_);
    s << "Uniform(" << u.lo << ", " << u.hi << ")";
  }
  return s.str();
}

}  // namespace hbiuq
