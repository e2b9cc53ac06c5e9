#pragma once

#include <stdexcept>
#include <string>

namespace hbiuq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid problem definition: malformed graph, bad config, bad arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or unwritable file, malformed data file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Forward model (or surrogate) produced a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, long record = -1)
      : Error(what), record_(record) {}
  long record() const noexcept { return record_; }

 private:
  long record_;
};

/// Gradient requested at a point where the density is not differentiable.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Ill-conditioned linear algebra (rank deficiency, non-PD kernel matrix).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Leapfrog hit a non-finite gradient or log-density.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Sampler or iterative workflow failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Output variance is zero, so variance-based indices are undefined.
class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hbiuq
