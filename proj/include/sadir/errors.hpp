#pragma once

#include <stdexcept>
#include <string>

namespace sadir {

// Grid or shape mismatch between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Out-of-range configuration or argument value.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values appeared during an iterative computation.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric is undefined for the given inputs (e.g. empty foreground).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad command line or config usage.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

} // namespace sadir
