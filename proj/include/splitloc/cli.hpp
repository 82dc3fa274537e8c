#pragma once
#include <string>
#include <vector>

namespace splitloc {

// Full command-line driver; args excludes the program name.
// Returns the process exit code: 0 ok, 1 runtime failure, 2 usage.
int run_cli(std::vector<std::string> args);

} // namespace splitloc
