#pragma once

#include <string>
#include <vector>

namespace styleforge::cli {

// Parses and runs one command. args excludes the program name.
// Exit codes: 0 success, 1 usage/validation error, 2 I/O or format error.
int dispatch(const std::vector<std::string>& args);

} // namespace styleforge::cli
