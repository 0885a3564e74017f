// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hfat {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape mismatch.
struct DimensionError : Error {
    using Error::Error;
};

// Out-of-range index (e.g. a class label outside [0, C)).
struct IndexError : Error {
    using Error::Error;
};

// API precondition violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Tape reused after backward or referenced after reset.
struct LifecycleError : Error {
    using Error::Error;
};

// Non-finite value produced where the all-finite invariant applies.
struct NumericError : Error {
    using Error::Error;
};

// Corrupt or unsupported on-disk format.
struct FormatError : Error {
    using Error::Error;
};

// Invalid model/dataset/training specification.
struct SpecError : Error {
    using Error::Error;
};

// Malformed input data (carries line numbers for CSV).
struct DataError : Error {
    using Error::Error;
};

// Request outside the implementation's stated limits.
struct CapabilityError : Error {
    using Error::Error;
};

// Not enough samples for a statistical fit.
struct InsufficientDataError : Error {
    using Error::Error;
};

} // namespace hfat
