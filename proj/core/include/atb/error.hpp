#pragma once

#include <stdexcept>
#include <string>

namespace atb {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit-code contract (config/usage -> 2, I/O -> 3, infeasible -> 4).

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct OracleError : std::runtime_error {
  explicit OracleError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MeasurementError : std::runtime_error {
  explicit MeasurementError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InfeasibleError : std::runtime_error {
  InfeasibleError(const std::string& msg, double tightest_feasible)
      : std::runtime_error(msg), tightest_feasible_budget(tightest_feasible) {}
  double tightest_feasible_budget;
};

}  // namespace atb
