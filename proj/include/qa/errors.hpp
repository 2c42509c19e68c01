#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qa {

enum class ErrorKind {
    argument,
    not_found,
    config,
    transport,
    validation,
    insufficient_data,
    export_failure,
    format,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base of every error raised by the engine. `kind()` is what the CLI
/// reports in its structured error line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& message) : Error(ErrorKind::argument, message) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error(ErrorKind::not_found, message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorKind::config, message) {}
};

/// A backend (remote encoder, remote scorer) could not be reached or
/// answered with something unusable. `stage()` names the pipeline stage
/// when known.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& message, std::string stage = {})
        : Error(ErrorKind::transport, stage.empty() ? message : stage + ": " + message),
          stage_(std::move(stage)), detail_(message) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string stage_;
    std::string detail_;
};

/// Input file content violates a schema or invariant. `line()` is 1-based,
/// 0 when the error is not tied to a line.
class ValidationError : public Error {
public:
    ValidationError(const std::string& message, std::size_t line = 0)
        : Error(ErrorKind::validation,
                line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& message)
        : Error(ErrorKind::insufficient_data, message) {}
};

class ExportError : public Error {
public:
    explicit ExportError(const std::string& message) : Error(ErrorKind::export_failure, message) {}
};

/// Corrupt or incompatible binary file.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& message) : Error(ErrorKind::format, message) {}
};

}  // namespace qa
