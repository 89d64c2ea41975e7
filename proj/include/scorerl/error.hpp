#pragma once

#include <stdexcept>
#include <string>

namespace scorerl {

// A learner produced a non-finite loss or gradient. `source` names the
// offending quantity ("reward_loss", "q1", "policy", ...).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string source, const std::string& detail)
      : std::runtime_error(source + ": " + detail), source_(std::move(source)) {}

  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
};

// Input violates a documented precondition (range, shape, unknown option).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Operation is valid in general but not in the current state of the object.
class ConflictError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace scorerl
