#pragma once

#include <ostream>

namespace magma::cli {

// Entry point of the `magma` tool. Returns the process exit code:
// 0 success, 1 usage or configuration error, 2 data error, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace magma::cli
