#pragma once

#include <stdexcept>
#include <string>

namespace b0cast {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file content (bad header field, wrong magic, invalid JSON).
struct ParseError : Error {
    using Error::Error;
};

// Internally inconsistent data (dims/payload mismatch, non-finite values).
struct IntegrityError : Error {
    using Error::Error;
};

// Incompatible shapes/grids/units between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid or contradictory run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// A pipeline stage was invoked before its inputs exist.
struct PrerequisiteError : Error {
    using Error::Error;
};

// Numerical failure (NaN loss, rank-deficient fit, ...).
struct NumericalError : Error {
    using Error::Error;
};

} // namespace b0cast
