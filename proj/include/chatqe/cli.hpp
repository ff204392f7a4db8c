// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace chatqe::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 1,  // bad flags, malformed or inconsistent input
  kIoFailure = 2,
  kBackendFailure = 3,  // translation backend or detector model
};

/// Maps a library exception onto the exit-code contract.
int exit_code_for(const std::exception& e);

/// Runs one subcommand; `args` excludes the program name. Human-readable
/// output goes to `out` and ends with a one-line JSON summary; diagnostics
/// go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace chatqe::cli
