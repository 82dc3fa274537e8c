#pragma once
#include <stdexcept>
#include <string>

namespace splitloc {

// Errors raised by the binary container readers (datasets, checkpoints).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BadMagicError : IoError {
    using IoError::IoError;
};

struct BadVersionError : IoError {
    using IoError::IoError;
};

struct TruncatedError : IoError {
    using IoError::IoError;
};

struct DimensionError : IoError {
    using IoError::IoError;
};

} // namespace splitloc
