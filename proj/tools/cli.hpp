#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace calibkit::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one CLI invocation. `args` excludes the program name. Returns the
/// process exit code: 0 success, 2 input/validation error, 1 internal error.
/// Errors are reported on `err` as a single JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace calibkit::cli
