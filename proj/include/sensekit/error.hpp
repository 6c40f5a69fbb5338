#pragma once

#include <stdexcept>
#include <string>

namespace sensekit {

/// Base class for every error raised by the toolkit. `exit_code()` is the
/// process status the CLI reports for it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration, flags, or parameters.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Malformed, missing, or inconsistent data.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Non-finite values, divergence during training.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class RangeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Raised when a trajectory cannot be fitted (too few or coincident points).
class FitError : public DataError {
public:
    using DataError::DataError;
};

/// Checkpoint / dataset mismatch.
class CompatibilityError : public DataError {
public:
    using DataError::DataError;
};

} // namespace sensekit
