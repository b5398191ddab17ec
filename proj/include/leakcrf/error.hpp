#pragma once

#include <stdexcept>
#include <string>

namespace leakcrf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (file formats, config). The message carries line/field context.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A domain invariant does not hold. The message names the violated invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Vector/matrix sizes disagree between model, features and graph.
class DimensionError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace leakcrf
