#pragma once

#include <stdexcept>
#include <string>

namespace featfuse {

// Input validation failures. The CLI maps every subclass to the same
// "validation" exit code.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scalar parameter is out of its admissible range (d <= 0, empty set, ...).
class ParameterError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Shapes or structural invariants disagree (dimension mismatch, bad pose).
class StructuralError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A requested id does not exist (unknown catalog instance, missing view).
class LookupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A function precondition was violated by the caller.
class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Degenerate numerics that have no meaningful result (zero-norm means, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace featfuse
