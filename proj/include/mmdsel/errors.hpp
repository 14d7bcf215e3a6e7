#pragma once

#include <stdexcept>
#include <string>

namespace mmdsel {

// Error taxonomy. InputError and its children map to process exit code 2,
// NumericError and its children to exit code 3.

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file content; the message carries a byte or line position.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

// Structurally valid input whose values are unusable (NaN, infinity, ...).
class DataError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data admits no meaningful statistic (e.g. zero median pairwise distance).
class DegenerateDataError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Estimated covariance is singular or a variance is non-positive.
class DegenerateCovarianceError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A selection event that is not consistent with the scores it claims to describe.
class InconsistentEventError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Arithmetic failed in a way no fallback path could recover (never a silent NaN).
class NumericalFailureError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A computed quantity violated an invariant the algebra guarantees.
class InternalConsistencyError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace mmdsel
