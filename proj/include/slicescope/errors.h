#ifndef SLICESCOPE_ERRORS_H_
#define SLICESCOPE_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slicescope {

// Raised when a caller breaks an operation's preconditions (dimension
// mismatches, out-of-range options, oversize explicit Hessians, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable on-disk artifacts.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arnoldi iteration produced non-finite values.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every eigenvalue of the restricted Hessian fell below the floor.
class DegenerateHessianError : public FactorizationError {
 public:
  using FactorizationError::FactorizationError;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Wraps a failure on one example of a dataset-wide operation.
class ExampleError : public std::runtime_error {
 public:
  ExampleError(std::size_t index, const std::string& message)
      : std::runtime_error("example " + std::to_string(index) + ": " + message), index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace slicescope

#endif  // SLICESCOPE_ERRORS_H_
