#pragma once

#include <stdexcept>
#include <string>

namespace hifi {

/// Base class for every error the library raises on bad data or numerics.
/// Invalid arguments (caller bugs, bad flags) use std::invalid_argument.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files, I/O failures.
class DataError : public Error {
public:
    using Error::Error;
};

/// Degenerate spectra, singular systems, non-convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace hifi
