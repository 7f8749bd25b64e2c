#pragma once

#include <iosfwd>

namespace mrm::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kFailure = 2 };

/// Runs one `mrm` invocation. Results go to `out`, diagnostics and log lines
/// to `err`; the log level comes from MRM_LOG (quiet, info or debug).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mrm::cli
