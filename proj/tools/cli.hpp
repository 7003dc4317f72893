#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bnip::cli {

/// Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O.
enum ExitCode : int { ok = 0, validation = 2, numerical = 3, io_failure = 4 };

/// Runs one command line (args[0] is the program name). Reports go to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bnip::cli
