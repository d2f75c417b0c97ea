#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace affmap {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Entry point of the `affmap` tool. `args[0]` is the program name.
// Subcommands: synth, train, eval, ablate, peak, export-pgm.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace affmap
