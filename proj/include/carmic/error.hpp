#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace carmic {

/// Every recoverable failure in the library surfaces as this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Receives non-fatal diagnostics (clipping, dropped channels, ...).
using WarningSink = std::function<void(const std::string&)>;

/// Writes "warning: <msg>" to stderr.
void stderr_warning(const std::string& message);

}  // namespace carmic
