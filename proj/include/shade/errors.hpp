#pragma once

#include <stdexcept>
#include <string>

namespace shade {

// CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// CLI exit code 3: training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& m) : std::runtime_error(m) {}
};

// CLI exit code 4: a verification oracle is invalid or failed.
struct OracleError : std::runtime_error {
  explicit OracleError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace shade
