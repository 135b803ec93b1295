#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace carmic {

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace carmic
