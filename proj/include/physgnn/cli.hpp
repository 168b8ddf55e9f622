#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace physgnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Runs the `physgnn` command line; `args` excludes the program name.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace physgnn::cli
