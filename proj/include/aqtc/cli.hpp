// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aqtc {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // gradcheck above tolerance
  kExitConfig = 2,       // bad flags, config keys or values
  kExitData = 3,         // unreadable or inconsistent inputs
  kExitContract = 4,     // any other runtime error
};

/// Runs one `aqtc` invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aqtc
