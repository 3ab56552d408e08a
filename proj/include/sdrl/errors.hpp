#pragma once

#include <stdexcept>
#include <string>

namespace sdrl {

/// Invalid configuration: bad shapes, out-of-range hyperparameters, malformed files.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite value produced where finite arithmetic is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse: stale tape, mismatched buffers, calls out of order.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint file cannot be read back into the requested architecture.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

/// The agent was asked to act with an empty sensor set.
struct SensorsUnavailableError : std::runtime_error {
    explicit SensorsUnavailableError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sdrl
