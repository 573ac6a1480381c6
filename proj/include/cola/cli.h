#pragma once

#include <ostream>

namespace cola {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

// Entry point of the `cola` executable. Human-readable messages go to `err`,
// tables and --json summaries to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cola
