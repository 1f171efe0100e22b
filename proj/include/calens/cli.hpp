#pragma once

#include <string>
#include <vector>

namespace calens::cli {

// Entry point of the command line driver (args exclude the program name).
// Exit codes: 0 success, 2 invalid arguments or configuration, 3 I/O or data
// failure, 4 training divergence, 5 degenerate calibration system (the
// minimum-norm solution is still written).
int run(const std::vector<std::string>& args);

}  // namespace calens::cli
