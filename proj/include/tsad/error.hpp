#pragma once

#include <stdexcept>
#include <string>

namespace tsad {

// Base of all library errors. The CLI maps each category to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument values, empty or too-short series, shape mismatches.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// A file that does not parse under its declared format.
class FormatError : public Error {
public:
    using Error::Error;
};

// Inconsistent configuration (architecture, encoder parameters, config keys).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or other numeric breakdown during training.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace tsad
