#pragma once

#include <string>
#include <vector>

namespace lgwae {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3 };

/// Parses and runs one command line (args[0] is the program name).
int run_cli(const std::vector<std::string>& args);

/// Applies LGWAE_THREADS, if set, to the OpenMP thread count. Throws
/// ConfigError for a value that is not a positive integer.
void apply_thread_limit();

}  // namespace lgwae
