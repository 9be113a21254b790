#pragma once

#include <stdexcept>
#include <string>

namespace igdm {

// Bad user input: malformed files, out-of-range options, missing paths.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or combination.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal contract violation (shape mismatch, non-scalar loss, ...).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values reached the optimizer or the loss.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Artifact pairs that do not belong together (checkpoint vs dataset).
struct MismatchError : std::runtime_error {
  explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace igdm
