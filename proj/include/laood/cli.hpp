#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace laood::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one invocation. args[0] is the program name. Subcommands: gen-synth,
/// fit, score, eval, tune, confusion, joint-train.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace laood::cli
