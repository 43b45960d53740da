#pragma once

#include <stdexcept>
#include <string>

namespace more {

/// Bad input: malformed files, violated preconditions, invalid configs.
/// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure during training (non-finite gradients).
/// The CLI maps these to exit code 2.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step)
        : std::runtime_error(what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Config-file problem tied to one key.
class ConfigError : public ValidationError {
public:
    ConfigError(std::string key, const std::string& message)
        : ValidationError(key + ": " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace more
