#pragma once

#include <stdexcept>
#include <string>

namespace auscult {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or degenerate input data (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, int line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class MetadataError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateSignalError : public DataError {
public:
    using DataError::DataError;
};

class DecompositionError : public DataError {
public:
    using DataError::DataError;
};

class UnsupportedOperation : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace auscult
