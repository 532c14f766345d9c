#pragma once

#include <stdexcept>
#include <string>

namespace oxyspec {

/// Bad user-supplied configuration (ranges, missing keys, invalid options).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data: file formats, CSV content, shapes.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array dimensions that do not agree.
class ShapeError : public DataError {
public:
    using DataError::DataError;
};

/// Serialized file with a bad magic, version, size or checksum.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Dark/light references that cannot calibrate a frame.
class CalibrationError : public DataError {
public:
    using DataError::DataError;
};

/// Too few or invalid points for a curve fit.
class FitError : public DataError {
public:
    using DataError::DataError;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite values or singular systems during numerical work.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace oxyspec
