#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace driventop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

/// Parses `args` (without the program name), runs the selected experiment and
/// writes its CSV files and manifest. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace driventop::cli
