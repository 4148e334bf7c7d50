#pragma once

#include <stdexcept>
#include <string>

namespace dlf {

// Base class for all errors raised by this library. Catching dlf::Error is
// sufficient to intercept anything we throw on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or dimension of an argument is inconsistent with the operation
// (e.g. mean and observation length differ, or a requested matrix has
// zero rows).
class InvalidShape : public Error {
public:
    explicit InvalidShape(const std::string& what) : Error(what) {}
};

// Two operands that must agree in dimension do not.
class DimensionMismatch : public InvalidShape {
public:
    explicit DimensionMismatch(const std::string& what) : InvalidShape(what) {}
};

// A matrix that must be symmetric positive definite failed the pivot test.
class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what) : Error(what) {}
};

// The E-step precision matrix could not be factorized. With jitter > 0 this
// cannot happen for well-formed inputs, so reaching it means the caller fed
// non-finite parameters into the E-step.
class SingularPrecision : public Error {
public:
    explicit SingularPrecision(const std::string& what) : Error(what) {}
};

// A vector that must lie on the probability simplex does not (entries
// negative or not summing to one within tolerance).
class InvalidSimplex : public Error {
public:
    explicit InvalidSimplex(const std::string& what) : Error(what) {}
};

// An iterative solver (e.g. the inverse-gamma MLE Newton loop) failed to
// converge within its iteration budget.
class ConvergenceFailure : public Error {
public:
    explicit ConvergenceFailure(const std::string& what) : Error(what) {}
};

// Configuration value is out of range or inconsistent with other settings.
class ConfigInvalid : public Error {
public:
    explicit ConfigInvalid(const std::string& what) : Error(what) {}
};

// A NetworkSpec with non-positive layer widths or other structural defects.
class InvalidSpec : public ConfigInvalid {
public:
    explicit InvalidSpec(const std::string& what) : ConfigInvalid(what) {}
};

// Synthetic-data generator received out-of-range parameters.
class InvalidParams : public ConfigInvalid {
public:
    explicit InvalidParams(const std::string& what) : ConfigInvalid(what) {}
};

// Design-point selection received an empty candidate pool.
class EmptyPool : public Error {
public:
    explicit EmptyPool(const std::string& what) : Error(what) {}
};

// CSV cell that could not be parsed; carries its 1-based position.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " (line " + std::to_string(line) + ", column " +
                std::to_string(column) + ")"),
          line(line),
          column(column) {}
    std::size_t line;
    std::size_t column;
};

// A row with fewer cells than the header promises.
class MissingValue : public Error {
public:
    explicit MissingValue(const std::string& what) : Error(what) {}
};

// File had a header but no data rows (or nothing at all).
class EmptyFile : public Error {
public:
    explicit EmptyFile(const std::string& what) : Error(what) {}
};

// Dataset too small to split.
class TooFewRows : public Error {
public:
    explicit TooFewRows(const std::string& what) : Error(what) {}
};

// All samples identical: no spread to fit a distribution to.
class DegenerateSamples : public Error {
public:
    explicit DegenerateSamples(const std::string& what) : Error(what) {}
};

// A sample that must be strictly positive is not.
class NonPositiveSample : public Error {
public:
    explicit NonPositiveSample(const std::string& what) : Error(what) {}
};

// A predictive component variance that must be positive is not.
class NonPositiveVariance : public Error {
public:
    explicit NonPositiveVariance(const std::string& what) : Error(what) {}
};

// An operation that needs at least one data point received none.
class EmptyData : public Error {
public:
    explicit EmptyData(const std::string& what) : Error(what) {}
};

// Training produced a non-finite loss; the run is aborted rather than
// silently continued with poisoned parameters.
class NonFiniteLoss : public Error {
public:
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

// Input file missing or malformed.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// A pipeline stage failed; wraps the underlying message with the stage
// name so command-line diagnostics say where the run died.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage(stage) {}
    std::string stage;
};

}  // namespace dlf
