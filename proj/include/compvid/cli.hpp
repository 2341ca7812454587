#pragma once

#include <string>
#include <vector>

namespace compvid {

/// Exit status contract of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Runs `compvid <command> [flags]`; args excludes the program name.
/// Subcommands: generate, train, eval, sample, plot.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace compvid
