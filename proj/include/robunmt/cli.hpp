#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace robunmt::cli {

// Exit codes: 0 success, 1 runtime failure, 2 bad arguments. Failures write
// one line "error: <category>: <message>" to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace robunmt::cli
