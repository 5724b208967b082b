#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dln {

/// Thrown when a caller violates a documented precondition (shape mismatch,
/// asymmetric input to a symmetric routine, rank-deficient whitening, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative kernel (Jacobi SVD / eigensolver) hit its sweep cap.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed external input. `line()` is 1-based, 0 when not line-specific.
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dln
