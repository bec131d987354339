#pragma once

#include <stdexcept>
#include <string>

namespace gpopt {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration: dimension mismatches, non-finite inputs,
// out-of-range hyperparameters, malformed config documents.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Factorization failed even after jitter escalation.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// File could not be opened, written or read.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file or message did not follow its documented format.
class FormatError : public Error {
 public:
  using Error::Error;
};

enum class ObjectiveErrorKind {
  WorkerCrash,
  Timeout,
  Protocol,
  WorkerReported,
  NonFinite,
};

inline const char* to_string(ObjectiveErrorKind kind) {
  switch (kind) {
    case ObjectiveErrorKind::WorkerCrash: return "worker_crash";
    case ObjectiveErrorKind::Timeout: return "timeout";
    case ObjectiveErrorKind::Protocol: return "protocol";
    case ObjectiveErrorKind::WorkerReported: return "worker_error";
    case ObjectiveErrorKind::NonFinite: return "non_finite";
  }
  return "unknown";
}

// The objective could not produce a usable value.
class ObjectiveError : public Error {
 public:
  ObjectiveError(ObjectiveErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ObjectiveErrorKind kind() const noexcept { return kind_; }

 private:
  ObjectiveErrorKind kind_;
};

}  // namespace gpopt
