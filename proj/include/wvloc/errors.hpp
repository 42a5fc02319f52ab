#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wvloc {

/// Base class for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration values, bad operation arguments, or violated
/// construction invariants (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure: missing file, unreadable path, failed write
/// (exit code 3).
class IoError : public Error {
public:
    using Error::Error;
};

/// A persisted artifact declares a schema version this build does not read.
class VersionMismatchError : public Error {
public:
    using Error::Error;
};

/// A JSON-Lines record failed to parse or has the wrong shape.
/// Carries the 1-based line number.
class MalformedLineError : public Error {
public:
    MalformedLineError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// An artifact's embedded config hash does not match the expected one.
class HashMismatchError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss (exit code 4). Carries the step at
/// which the divergence was detected.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace wvloc
