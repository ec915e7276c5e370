#pragma once

#include <stdexcept>
#include <string>

namespace flowgrad {

/// Invalid configuration, unknown catalog entry, or violated precondition.
/// The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numeric procedure failed (quadrature did not converge, singular matrix,
/// overflow, divergent iteration). The CLI maps it to exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Quadrature failure carrying the best error estimate that was reached.
class QuadratureError : public NumericError {
public:
    QuadratureError(const std::string& what, double achieved_error)
        : NumericError(what + " (achieved error estimate " + std::to_string(achieved_error) + ")"),
          achieved_error_(achieved_error) {}

    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

}  // namespace flowgrad
