#pragma once

#include <stdexcept>
#include <string>

namespace tspike {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up (matmul inner dims, elementwise mismatch, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration: bad layer chain, unknown preset, bad hyperparameter.
struct ConfigError : Error {
    using Error::Error;
};

// API misuse: backward on a non-scalar, double backward, empty record, ...
struct ContractError : Error {
    using Error::Error;
};

// Malformed file (IDX, TSPK container, checkpoint manifest, counts file).
struct FormatError : Error {
    using Error::Error;
};

// Amplitude folding cannot proceed (unequal amplitudes across a residual join).
struct ConversionError : Error {
    using Error::Error;
};

// Converted network failed the output-invariance check.
struct VerificationError : Error {
    using Error::Error;
};

} // namespace tspike
