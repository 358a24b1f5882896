#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace acgen {

// Exit codes: 0 success, 1 generation or validation failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace acgen
