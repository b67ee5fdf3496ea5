#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ldk {

// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 2,
  exit_validation = 3,
  exit_io = 4,
  exit_numerical = 5,
};

// Runs one `ldk` invocation. `args` excludes the program name. Errors are
// reported on `err` as a single "ldk: error[<category>]: <message>" line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ldk
