#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geosent::cli {

inline constexpr int kUsageExit = 64;

/// Runs one subcommand. `args` excludes the program name. Returns the process
/// exit code: 0 on success, 64 on usage errors, otherwise the error class code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geosent::cli
