#pragma once

#include <stdexcept>
#include <string>

namespace scl {

// Caller supplied something outside an operation's domain.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A construction that cannot produce a usable object (e.g. degenerate guess).
class ConstructionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Estimators that are undefined on some draws raise this; the Monte Carlo
// harness records the replicate as failed instead of aborting.
enum class FailureKind { undefined_draw, degenerate_exposure, weak_instrument };

const char* to_string(FailureKind kind);

class EstimationFailure : public std::runtime_error {
 public:
  EstimationFailure(FailureKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FailureKind kind() const { return kind_; }

 private:
  FailureKind kind_;
};

}  // namespace scl
