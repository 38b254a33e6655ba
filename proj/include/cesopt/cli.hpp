#pragma once

#include <string>
#include <vector>

// Command-line front door. Exit codes are a stable contract:
//   0 success, 1 input error, 2 infeasible problem, 3 solver non-convergence.
// Logging goes to stderr; data goes to files plus a short stdout summary.

namespace cesopt::cli {

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args); // args without the program name

} // namespace cesopt::cli
