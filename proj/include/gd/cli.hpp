#pragma once

#include <string>
#include <vector>

namespace gd::cli {

// Exit codes: 0 ok, 2 usage/config error, 3 runtime failure (non-finite
// loss), 4 selftest failure.
constexpr int kOk = 0;
constexpr int kUsageError = 2;
constexpr int kRuntimeFailure = 3;
constexpr int kSelftestFailure = 4;

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace gd::cli
