#pragma once

#include <stdexcept>
#include <string>

namespace hddf {

// Caller violated an API precondition.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Bad user-supplied configuration (scenario file, covariance, CLI flags).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optimization cannot proceed (gauge not fixed, singular normal equations).
struct UnderconstrainedGraph : std::runtime_error {
  explicit UnderconstrainedGraph(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Corrupt or incompatible wire payload.
struct DecodeError : std::runtime_error {
  explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hddf
