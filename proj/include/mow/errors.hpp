#pragma once

#include <stdexcept>
#include <string>

namespace mow {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or argument mismatch between tensors / segments.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf surfaced in a value, gradient or cost.
struct NumericError : Error {
    using Error::Error;
};

// Bad configuration file, key, or precondition on user input.
struct ConfigError : Error {
    using Error::Error;
};

// File format / filesystem failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace mow
