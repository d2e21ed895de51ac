#pragma once

#include <stdexcept>
#include <string>

namespace fzrisk {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be opened or read.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed input (CSV cells, JSON config, flag values).
class ParseError : public Error {
public:
    using Error::Error;
};

// Structurally valid input that violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Overflow, non-finite propagation, or a numerical routine that failed
// to reach its accuracy target.
class NumericError : public Error {
public:
    using Error::Error;
};

// Optimization finished without producing a usable parameter vector.
class EstimationError : public Error {
public:
    using Error::Error;
};

} // namespace fzrisk
