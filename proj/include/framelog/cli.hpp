#pragma once

#include <string>
#include <vector>

namespace framelog::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point shared by the executable and the tests. Exit codes: 0 success,
/// 1 runtime failure, 2 usage error. Errors print one line to stderr:
///   error: kind=<token> msg=<text>
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace framelog::cli
