#pragma once

#include <stdexcept>
#include <string>

namespace mdlreg {

// Raised when a computation fails for numerical reasons (eigensolver
// non-convergence, degenerate Gram matrix, diverging series).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when reading or writing artifact files fails.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mdlreg
