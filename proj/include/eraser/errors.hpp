#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eraser {

/// A parameter or input is outside the domain an operation accepts.
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed text input. Carries the 1-based line number that failed.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed rows that violate the event stream schema (ordering, x field).
class FormatError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Not enough data for a statistical estimate.
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A fringe fit could not be performed. The diagnostics describe the input.
class FitDegenerate : public std::runtime_error {
public:
    struct Diagnostics {
        std::size_t bins = 0;
        double span_m = 0.0;
        double period_m = 0.0;
        double total_counts = 0.0;
    };

    FitDegenerate(const std::string& what, Diagnostics diag)
        : std::runtime_error(what), diag_(diag) {}
    const Diagnostics& diagnostics() const noexcept { return diag_; }

private:
    Diagnostics diag_;
};

/// Broken internal invariant, e.g. a rejection sampler that never accepts.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace eraser
