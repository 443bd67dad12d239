// Error types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace lmbridge {

// Thrown when a kernel (co)metric matrix fails its positive-definite
// factorization, e.g. because two landmarks coincide.
class DegenerateMetricError : public std::runtime_error {
public:
    explicit DegenerateMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a Monte Carlo estimate or an optimization run cannot produce a
// usable result (every sample aborted, likelihood diverged, ...).
class EstimationFailedError : public std::runtime_error {
public:
    explicit EstimationFailedError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lmbridge
