#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ipnmt::cli {

// Exit codes of every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime failure
inline constexpr int kExitUsage = 2;    // bad flags, config, paths or inputs

// Runs `ipnmt <args...>` (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipnmt::cli
