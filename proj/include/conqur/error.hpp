#pragma once

#include <stdexcept>
#include <string>

namespace conqur {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid ids, mismatched dimensions, malformed assignments.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// An enumeration would exceed its configured cap.
class SizeError : public Error {
public:
    using Error::Error;
};

/// Loss blow-up or a non-finite intermediate value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Iterative solver ran out of iterations. Carries the last residual.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A builtin instance failed its own certification.
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// Configuration or document parse failure.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

/// Broken internal invariant (a defect, never a user error).
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace conqur
