#pragma once

#include <stdexcept>
#include <string>

namespace ploc {

/// Raised when a caller breaks an operation's precondition (bad shape,
/// mismatched dimensions, tensor not recorded on a tape, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values during forward/backward, or a diverging loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or malformed files, empty datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid command-line level request (unknown method, missing checkpoint).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void expects(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

inline void expects(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace ploc
