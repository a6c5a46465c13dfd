#pragma once

#include <stdexcept>
#include <string>

namespace invbench {

/// Invalid sizes, selectors or probability vectors supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace invbench
