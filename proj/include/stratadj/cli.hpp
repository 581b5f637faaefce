#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stratadj {

/// Exit codes: 0 success, 1 verification failure, 2 input error.
constexpr int kExitOk = 0;
constexpr int kExitVerificationFailed = 1;
constexpr int kExitInputError = 2;

/// Entry point of the `stratadj` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stratadj
