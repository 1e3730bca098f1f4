#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pairscale::cli {

// Runs one invocation. `args` excludes the program name. Returns the process
// exit code: 0 success, 1 usage or validation error, 2 runtime error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pairscale::cli
