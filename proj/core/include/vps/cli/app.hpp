#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace vps {

// Exit codes of the vpsmap tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitSolver = 3;

// Runs one vpsmap invocation; `args` excludes the program name. `stop`
// ends a running `serve` early (a signal handler may set it).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop = nullptr);

}  // namespace vps
