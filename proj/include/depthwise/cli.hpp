#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace depthwise {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (without the program name). Returns the process exit status:
/// 0 on success, 1 on operational failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace depthwise
