#pragma once

#include <stdexcept>

namespace lorafield {

// Shape/dimension disagreement between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure (non-convergence, overflow to non-finite values).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (sample files, shape descriptors).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation invoked without the prior state it requires.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Optimization failure; the message names the last finite step when known.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File format or filesystem failure for checkpoints, adapters and images.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lorafield
