#pragma once

#include <stdexcept>
#include <string>

namespace trajkit {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Bad or missing input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

// Tensor/sequence dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A serialized file carries a format version this build does not read.
class VersionMismatch : public DataError {
public:
    using DataError::DataError;
};

// A serialized file is damaged (truncation, bad magic, failed checks).
class CorruptFile : public DataError {
public:
    using DataError::DataError;
};

// Training loss became NaN/Inf (CLI exit code 4).
class TrainDivergence : public Error {
public:
    using Error::Error;
};

} // namespace trajkit
