#pragma once

#include <stdexcept>
#include <string>

namespace mlfp {

// Bad user input: malformed files, invariant violations, bad arguments.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that does not decode as the declared format.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ArgumentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Missing files, unreadable streams, failed writes. Exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A post-condition of an earlier stage does not hold (e.g. unsorted samples
// reaching the integrator). Indicates a bug, not bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mlfp
