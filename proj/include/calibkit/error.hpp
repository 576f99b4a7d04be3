#pragma once

#include <stdexcept>
#include <string>

namespace calibkit {

/// Raised when an input violates a documented precondition (bad shape,
/// out-of-range label, malformed file). The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace calibkit
