#pragma once

#include <stdexcept>
#include <string>

namespace usd {

// Bad user input: malformed config, malformed dataset file, schema violation.
// CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : ConfigError {
  explicit ParseError(const std::string& msg) : ConfigError(msg) {}
};

// Non-finite values mid-run, divergence, failed generation. Exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace usd
