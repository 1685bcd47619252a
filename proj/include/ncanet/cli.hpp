#pragma once

#include <iostream>

namespace ncanet {

// Exit codes of the ncanet tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitVersion = 5,
};

// Entry point of the ncanet tool: train, derain, eval, profile, ablate, synth.
// Tables go to `out`, logs and diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace ncanet
