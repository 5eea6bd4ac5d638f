#pragma once

#include <string>
#include <vector>

namespace asrl {

// Entry point behind main(): args are the argv words after the program name.
// Returns the process exit code: 0 on success, 1 for configuration or input
// errors, 2 when a run aborted on a non-finite loss.
int run_cli(const std::vector<std::string>& args);

}  // namespace asrl
