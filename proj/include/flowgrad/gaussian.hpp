#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowgrad {

/// Constant covariance b = σσ* with its Cholesky factor and inverse.
struct GaussianFrame {
    std::size_t dim = 0;
    std::vector<double> cov;    ///< b, row-major
    std::vector<double> chol;   ///< lower L with L Lᵀ = b
    std::vector<double> inv;    ///< b⁻¹
    double det = 1.0;

    /// (y - x)ᵀ b⁻¹ (y - x).
    double quadratic(std::span<const double> x, std::span<const double> y) const noexcept;
};

/// Identity covariance when `cov` is empty. Throws NumericError if b is not
/// symmetric positive definite.
GaussianFrame make_gaussian_frame(std::span<const double> cov, std::size_t dim);

/// Density of N(x0, (s - t0) b) at y.
double gaussian_kernel(double t0, std::span<const double> x0, double s, std::span<const double> y,
                       std::span<const double> cov = {});
double gaussian_kernel(const GaussianFrame& frame, double elapsed, std::span<const double> x0,
                       std::span<const double> y) noexcept;

}  // namespace flowgrad
