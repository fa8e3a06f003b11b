#pragma once

#include <string>
#include <vector>

namespace contcl::cli {

// Runs one subcommand. Exit codes: 0 success, 1 runtime failure, 2 usage
// error, 3 bad configuration.
int dispatch(const std::vector<std::string>& args);

}  // namespace contcl::cli
