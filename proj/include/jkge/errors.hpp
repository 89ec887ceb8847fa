#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace jkge {

/// Bad caller-supplied argument (invalid length, unit, fraction, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input data (unparseable row, duplicate date, ...).
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input on which the requested quantity is mathematically undefined
/// (zero variance, all-missing record, zero-anomaly benchmark, ...).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested gradient does not exist at the evaluation point.
class GradientUndefinedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimisation aborted; carries the loss trace recorded up to the failure.
class CalibrationError : public std::runtime_error {
public:
    CalibrationError(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), loss_trace(std::move(trace)) {}
    std::vector<double> loss_trace;
};

}  // namespace jkge
