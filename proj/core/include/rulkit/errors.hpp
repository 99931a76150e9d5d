#pragma once

#include <stdexcept>
#include <string>

namespace rulkit {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numeric field failed to parse; message carries the row index.
struct ParseError : Error {
    using Error::Error;
};

// A record file does not have the expected row count / field layout.
struct MalformedRecordError : Error {
    using Error::Error;
};

// Empty directory, empty dataset, empty training split.
struct NoDataError : Error {
    using Error::Error;
};

// Zero variance, zero RMS, rank-0 matrix: the operation is undefined.
struct DegenerateDataError : Error {
    using Error::Error;
};

// Tensor/matrix dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// A value is outside the mathematical domain of the operation.
struct DomainError : Error {
    using Error::Error;
};

// A series is too short for the requested window/operation.
struct LengthError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (missing model, bad fold count...).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem failures while reading or writing artifacts.
struct IoError : Error {
    using Error::Error;
};

// An API contract was violated (e.g. backward() on a non-scalar).
struct ContractError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace rulkit
