#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/measure_types.hpp"
#include "flowgrad/quadrature.hpp"

namespace flowgrad {

/// ω_n(x) = c_{d,n} exp(-1/(1 - |n x|²)) on |x| < 1/n, unit mass.
///
/// Convolutions use a tensor Gauss–Legendre rule on the cube [-1/n, 1/n]^d
/// whose kernel-weighted weights are rescaled to sum to one, so that
/// constants are reproduced exactly and |ω_n ∗ f| <= sup |f| holds for the
/// discrete rule as well. When a jump surface of the integrand cuts the
/// kernel ball, the rule is rebuilt in a frame aligned with the surface
/// normal and split at the jump.
class Mollifier {
public:
    Mollifier(std::size_t dim, int n, std::size_t nodes_per_axis = 32);

    std::size_t dim() const noexcept { return dim_; }
    int n() const noexcept { return n_; }
    double radius() const noexcept { return radius_; }

    double operator()(std::span<const double> x) const noexcept;
    /// ∫_{R^{d-1}} ω_n(u e_1 + v) dv (radial symmetry makes the direction irrelevant).
    double marginal(double u) const;
    /// ∫_{-∞}^{u} marginal, tabulated once per dimension (odd symmetry about 0 is exact).
    double marginal_cdf(double u) const;

    /// (ω_n ∗ f)(x) for vector-valued f with `width` components.
    /// `eval(y, out)` writes f(y). Jump surfaces of f are honoured.
    template <class F>
    void convolve(std::span<const double> x, std::size_t width, const std::vector<JumpSurface>& jumps, F&& eval,
                  std::span<double> out) const;

    /// Normalized nodes: offsets z_i and weights W_i with Σ W_i = 1.
    const TensorRule& rule() const noexcept { return rule_; }

    /// Discrete mass of the unsplit rule before rescaling (≈ 1).
    double raw_rule_mass() const noexcept { return raw_mass_; }

private:
    TensorRule split_rule(const JumpSurface& jump, std::span<const double> x) const;

    std::size_t dim_;
    int n_;
    double radius_;
    std::size_t nodes_per_axis_;
    double normalization_;
    double unit_mass_ = 1.0;
    double raw_mass_ = 0.0;
    TensorRule rule_;
};

/// a_n = ω_n ∗ a; smooth, with ∇a_n = μ ∗ ω_n (BV) or ∇a ∗ ω_n (smooth).
std::shared_ptr<const DriftSpec> mollify_drift(std::shared_ptr<const DriftSpec> drift, int n);

/// Density of μ ∗ ω_n.
DensityPart mollify_measure_to_density(const SpaceTimeMeasure& measure, int n);

/// Internal: value/gradient of a mollified drift (used by DriftSpec).
void mollified_value(const drift::Mollified& m, double t, std::span<const double> x, std::span<double> out);
void mollified_gradient(const drift::Mollified& m, double t, std::span<const double> x, std::span<double> out);

/// Orthonormal basis (row-major d×d) whose first row is `normal`.
std::vector<double> frame_from_normal(std::span<const double> normal);

template <class F>
void Mollifier::convolve(std::span<const double> x, std::size_t width, const std::vector<JumpSurface>& jumps, F&& eval,
                         std::span<double> out) const {
    const TensorRule* rule = &rule_;
    TensorRule local;
    for (const auto& j : jumps) {
        double proj = -j.offset;
        for (std::size_t k = 0; k < dim_; ++k) proj += j.normal[k] * x[k];
        if (std::abs(proj) < radius_) {
            local = split_rule(j, x);
            rule = &local;
            break;
        }
    }
    std::vector<double> y(dim_);
    std::vector<double> val(width);
    for (std::size_t c = 0; c < width; ++c) out[c] = 0.0;
    for (std::size_t p = 0; p < rule->size(); ++p) {
        for (std::size_t k = 0; k < dim_; ++k) y[k] = x[k] - rule->points[p * dim_ + k];
        eval(std::span<const double>(y), std::span<double>(val));
        const double w = rule->weights[p];
        for (std::size_t c = 0; c < width; ++c) out[c] += w * val[c];
    }
}

}  // namespace flowgrad
