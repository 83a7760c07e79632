#ifndef KPDET_TOOLS_CLI_HPP
#define KPDET_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace kpdet::cli {

enum ExitCode : int { kSuccess = 0, kInternalError = 1, kBadInput = 2, kConfigError = 3 };

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kpdet::cli

#endif  // KPDET_TOOLS_CLI_HPP
