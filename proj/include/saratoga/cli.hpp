#pragma once

// Command-line entry points: recv, send, bench.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 transfer failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace saratoga::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitTransferFailed = 2;

inline constexpr unsigned kDefaultPort = 7542;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace saratoga::cli
