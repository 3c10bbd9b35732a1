#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prion {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A sampled coefficient (tau, beta, mu) is negative somewhere on the grid.
class CoefficientError : public Error {
public:
    CoefficientError(std::string function, double x, double value)
        : Error("coefficient '" + function + "' is negative (" + std::to_string(value) +
                ") at x = " + std::to_string(x)),
          function_(std::move(function)), x_(x), value_(value) {}

    const std::string& function() const noexcept { return function_; }
    double x() const noexcept { return x_; }
    double value() const noexcept { return value_; }

private:
    std::string function_;
    double x_;
    double value_;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method exhausted its budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual, int iterations)
        : Error(what + " (last residual " + std::to_string(last_residual) + " after " +
                std::to_string(iterations) + " iterations)"),
          last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

/// A vector that must be nonnegative (eigenvector, density) is not.
class PositivityError : public Error {
public:
    using Error::Error;
};

/// The operation is only defined for a restricted class of coefficients.
class UnsupportedConfiguration : public Error {
public:
    using Error::Error;
};

struct ConfigIssue {
    int line = 0;  // 0 when the issue is not tied to a line
    std::string field;
    std::string message;
};

/// Configuration text failed validation. Carries every issue found, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues)
        : Error(summarize(issues)), issues_(std::move(issues)) {}

    const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

private:
    static std::string summarize(const std::vector<ConfigIssue>& issues) {
        std::string out = "invalid configuration:";
        for (const auto& issue : issues) {
            out += "\n  ";
            if (issue.line > 0) out += "line " + std::to_string(issue.line) + ": ";
            if (!issue.field.empty()) out += issue.field + ": ";
            out += issue.message;
        }
        return out;
    }

    std::vector<ConfigIssue> issues_;
};

}  // namespace prion
