#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace flowgrad {

/// Gauss–Legendre rule on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss–Legendre rule, computed once per n and cached.
const GaussRule& gauss_legendre(std::size_t n);

/// n-point Gauss–Hermite rule for the standard normal weight: Σ w_i f(x_i)
/// approximates E f(ξ), ξ ~ N(0,1). Computed once per n and cached.
const GaussRule& gauss_hermite(std::size_t n);

/// Composite Gauss–Legendre integral of f over [a, b] with `panels` equal panels.
double integrate_gl(const std::function<double(double)>& f, double a, double b, std::size_t n = 16,
                    std::size_t panels = 1);

/// Adaptive Gauss–Kronrod (boost) integral; throws QuadratureError when the
/// error estimate stays above `tol` (absolute).
double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                          unsigned max_depth = 15);

/// Non-normalized upper incomplete gamma Γ(a, x) for x > 0. Supports
/// a = -1/2 and a = 0 (via erfc / E1 recurrences) and any a > 0.
double upper_gamma(double a, double x);

/// ∫_0^t (2π s)^{-1/2} exp(-r²/(2s)) ds, the time-integrated 1-d heat kernel.
double heat_kernel_time_integral_1d(double r, double t);

/// Tensor-product rule nodes on the cube [-h, h]^d (row-major node
/// coordinates, `weights` include the Jacobian).
struct TensorRule {
    std::size_t dim = 0;
    std::vector<double> points;  ///< size n_points * dim
    std::vector<double> weights;
    std::size_t size() const noexcept { return weights.size(); }
};

TensorRule tensor_gauss(std::size_t dim, double half_width, std::size_t n_per_axis);

}  // namespace flowgrad
