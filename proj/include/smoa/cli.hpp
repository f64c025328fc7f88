#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace smoa::cli {

/// Process exit codes.
enum ExitCode : int {
    kSuccess = 0,
    kValidationFailure = 1,
    kNumericalFailure = 2,
    kIoFailure = 3,
};

/// Entry point behind the `smoa` binary. Subcommands: analyze, rank-bench,
/// train, gradcheck. Returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smoa::cli
