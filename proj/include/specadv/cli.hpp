#pragma once

#include <string>
#include <vector>

namespace specadv {

// Runs one command-line invocation; args exclude the program name.
// Returns the process exit code: 0 success, 1 usage error, 2 data error,
// 3 numeric failure. Diagnostics go to standard error.
int run_cli(const std::vector<std::string>& args);

}  // namespace specadv
