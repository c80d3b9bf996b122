#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nemo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name). Files named
/// by --out are written atomically; without --out the primary output goes to
/// `out`. Errors are written to `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace nemo
