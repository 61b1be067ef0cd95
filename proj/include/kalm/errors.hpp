#pragma once

#include <stdexcept>
#include <string>

namespace kalm {

// Every failure the library reports derives from Error. The CLI maps the
// subclasses onto exit codes (usage 1, data/config 2, numeric 3).
class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
    using Error::Error;
};

class IndexError : public Error {
 public:
    using Error::Error;
};

class NumericError : public Error {
 public:
    using Error::Error;
};

class DataError : public Error {
 public:
    using Error::Error;
};

// Checkpoint written by an incompatible format revision.
class VersionError : public DataError {
 public:
    using DataError::DataError;
};

class ConfigError : public Error {
 public:
    using Error::Error;
};

class StateError : public Error {
 public:
    using Error::Error;
};

class EmptyInputError : public DataError {
 public:
    using DataError::DataError;
};

class UsageError : public Error {
 public:
    using Error::Error;
};

}  // namespace kalm
