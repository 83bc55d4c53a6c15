#pragma once

#include <stdexcept>
#include <string>

namespace nvs {

/// Operand shapes that cannot be combined (broadcast, matmul, conv, concat).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical preconditions violated (non-positive depth, NaN flow, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Structurally invalid inputs (non-orthonormal rotation, bad config keys).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-system and format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nvs
