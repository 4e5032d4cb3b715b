#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps ValidationError subclasses to exit code 2 and
// everything else to exit code 3.
struct ScdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : ScdError {
    using ScdError::ScdError;
};

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

struct ArgumentError : ValidationError {
    using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
    ParseError(const std::string& path, int line, const std::string& what)
        : ValidationError(path + ":" + std::to_string(line) + ": " + what), line(line) {}
    int line;
};

struct NumericalError : ScdError {
    NumericalError(const std::string& what, int frame)
        : ScdError(what + " (frame " + std::to_string(frame) + ")"), frame(frame) {}
    int frame;
};

struct AlignmentError : ScdError {
    using ScdError::ScdError;
};

struct DegenerateError : ScdError {
    using ScdError::ScdError;
};

struct MetricError : ScdError {
    using ScdError::ScdError;
};

// Raised by the gradient checker when an example sits too close to a clamp or
// fire boundary for finite differences to be meaningful.
struct RejectedExample : ScdError {
    using ScdError::ScdError;
};

// Named view over a parameter tensor; used by the optimizer, checkpointing and
// gradient checking, all of which need a stable parameter order.
struct NamedTensor {
    std::string name;
    Matrix* value;
};

using TensorList = std::vector<NamedTensor>;

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace scd
