#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gasket {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested level or size exceeds a configured cap.
class ResourceLimitError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Arguments outside the documented domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative procedure stopped without meeting its tolerance.
/// Carries the per-iteration log so callers can report it.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, std::vector<double> log)
        : Error(what), log_(std::move(log)) {}

    const std::vector<double>& log() const noexcept { return log_; }

private:
    std::vector<double> log_;
};

/// A Monte Carlo sample exceeded the representable range. `quantile` is the
/// empirical level above which samples were truncated.
class OverflowGuardError : public Error {
public:
    OverflowGuardError(const std::string& what, double quantile) : Error(what), quantile_(quantile) {}

    double quantile() const noexcept { return quantile_; }

private:
    double quantile_;
};

}  // namespace gasket
