#pragma once

#include <stdexcept>
#include <string>

namespace jscc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or layer sizes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File missing, truncated, or carrying the wrong magic/version.
class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during training; carries the stage and epoch.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& stage, int epoch)
        : Error("training diverged in stage '" + stage + "' at epoch " + std::to_string(epoch)),
          stage_(stage), epoch_(epoch) {}

    const std::string& stage() const { return stage_; }
    int epoch() const { return epoch_; }

private:
    std::string stage_;
    int epoch_;
};

/// Arithmetic decoding hit an inconsistent or truncated stream.
class DecodeError : public Error {
public:
    using Error::Error;
};

} // namespace jscc
