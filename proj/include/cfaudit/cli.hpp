#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cfaudit {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_data = 3, exit_infeasible = 4 };

/// Runs one command line (without the program name). Errors are reported on `err` as
/// single-line JSON records and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfaudit
