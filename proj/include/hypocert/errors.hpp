#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypocert {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coefficient field or potential produced a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::string entry)
      : Error(what), entry_(std::move(entry)) {}
  const std::string& entry() const { return entry_; }

 private:
  std::string entry_;
};

/// Σ(v) failed to be positive definite at a point.
class EllipticityViolation : public Error {
 public:
  EllipticityViolation(const std::string& what, std::vector<double> point, std::size_t pivot)
      : Error(what), point_(std::move(point)), pivot_(pivot) {}
  const std::vector<double>& point() const { return point_; }
  std::size_t pivot() const { return pivot_; }

 private:
  std::vector<double> point_;
  std::size_t pivot_;
};

/// A declared hypothesis was contradicted by a probe.
class AssumptionFailure : public Error {
 public:
  AssumptionFailure(const std::string& what, std::string condition, std::vector<double> witness)
      : Error(what), condition_(std::move(condition)), witness_(std::move(witness)) {}
  const std::string& condition() const { return condition_; }
  const std::vector<double>& witness() const { return witness_; }

 private:
  std::string condition_;
  std::vector<double> witness_;
};

/// Eigensolve, linear solve or quadrature did not deliver a usable result.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The certificate algebra contradicted one of its own identities.
class CertificateInconsistency : public Error {
 public:
  using Error::Error;
};

/// A time integrator produced a non-finite state.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::size_t path, double time)
      : Error(what), path_(path), time_(time) {}
  std::size_t path() const { return path_; }
  double time() const { return time_; }

 private:
  std::size_t path_;
  double time_;
};

/// Caller violated an operation precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hypocert
