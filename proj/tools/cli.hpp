#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msvar::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitInvalid = 2,  ///< I/O or validation failure
    kExitNotConverged = 3,
};

/// Runs one msvar command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msvar::cli
