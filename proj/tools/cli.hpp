#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gazemoe::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageError = 2;

/// Parses `args` (without the program name) and runs the subcommand. Reports
/// go to `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gazemoe::cli
