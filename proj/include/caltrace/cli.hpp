#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace caltrace::cli {

enum ExitCode : int {
  kExitOk = 0,
  /// A verification failed or the contract rejected the call.
  kExitInvalid = 1,
  kExitUsage = 2,
  /// The chain file failed validation or could not be read or written.
  kExitIntegrity = 3,
};

/// Runs one `caltrace` invocation. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace caltrace::cli
