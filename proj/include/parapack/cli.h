#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace parapack {

enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 2,
  kExitUnobservable = 3,
  kExitNumericalFailure = 4,
};

/// Entry point of the `parapack` command line tool. Subcommands: simulate,
/// observability, cluster, study. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace parapack
