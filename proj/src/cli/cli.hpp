#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mlem::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kMissingInput = 2,
    kBadFormat = 3,
    kSchemaMismatch = 4,
    kAlignment = 5,
};

/// Parses args (without the program name), runs the subcommand and maps errors to exit codes.
/// Written paths go to out, progress and errors to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace mlem::cli
