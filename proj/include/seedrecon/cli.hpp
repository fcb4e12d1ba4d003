#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seedrecon {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitUsage = 2,
  kExitLowConfidence = 3,
  kExitOracle = 4,
};

// Worker count from SEEDRECON_WORKERS, else the hardware thread count.
unsigned default_workers();

// Entry point of the seedrecon command. Subcommands: gen-noise,
// recover-seed, ga-recover, stats. Returns one of ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seedrecon
