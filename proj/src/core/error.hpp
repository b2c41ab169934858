#pragma once
#include <stdexcept>
#include <string>

namespace steerlab {

// Error taxonomy maps onto process exit codes at the API boundary:
// config 2, numeric 3, gate 4, anything else 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// Shape/contract violations: programmer or wiring mistakes, not user config.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& m) : std::logic_error(m) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

// A validity gate failed (e.g. feature extractor below accuracy floor);
// downstream results would be meaningless.
struct GateError : std::runtime_error {
    explicit GateError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace steerlab
