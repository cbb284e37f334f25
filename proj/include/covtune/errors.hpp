#pragma once

#include <stdexcept>
#include <string>

namespace covtune {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain inputs (non-finite entries, bad dimensions,
/// negative scale parameters, matrices that are not PSD beyond tolerance).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// The constrained problem has an empty feasible set, e.g. y outside the
/// range of X C X^T + V.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// The infimum over a weight family exists but no finite weight matrix
/// attains it.
class NotAttainedError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to reach its tolerance and the caller asked
/// for a converged result.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// File parsing / serialization problems (CSV, config).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace covtune
