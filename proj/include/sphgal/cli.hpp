#pragma once

#include <string>
#include <vector>

namespace sphgal {

/// Runs the command-line interface; returns the process exit code
/// (0 success, 1 runtime failure, 2 usage error).
int cli_run(const std::vector<std::string>& args);

}  // namespace sphgal
