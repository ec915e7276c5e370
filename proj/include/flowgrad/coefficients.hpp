#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowgrad/measure_types.hpp"

namespace flowgrad {

class Mollifier;
class DriftSpec;

/// Smooth radial cutoff: 1 for |x| <= radius - width, 0 for |x| >= radius,
/// C^∞ in between.
struct Cutoff {
    double radius = 1.0;
    double width = 1.0;

    static Cutoff for_radius(double radius);
    double value(double r) const noexcept;
    /// dχ/dr.
    double derivative(double r) const noexcept;
    bool is_one(double r) const noexcept { return r <= radius - width; }
};

/// Standard bump exp(1 - 1/(1 - |u|²)) on the unit ball, peak 1 at u = 0.
double unit_bump(double u_norm2) noexcept;
/// d/d(|u|²) of unit_bump.
double unit_bump_derivative(double u_norm2) noexcept;

namespace drift {
struct Zero {};
struct Constant {
    std::vector<double> value;
};
/// a(x) = α x χ(|x|), α row-major d×d.
struct Linear {
    std::vector<double> alpha;
};
/// d = 1: a(x) = κ sign(x) χ(|x|).
struct Sign {
    double kappa = 0.0;
};
/// a(x) = J (1{x·n > c} - 1/2) χ(|x|).
struct Hyperplane {
    std::vector<double> normal;
    double offset = 0.0;
    std::vector<double> jump;
};
/// a(x) = v · bump((x - center)/radius).
struct Bump {
    std::vector<double> amplitude;
    std::vector<double> center;
    double radius = 1.0;
};
/// a_n = ω_n ∗ base.
struct Mollified {
    std::shared_ptr<const DriftSpec> base;
    std::shared_ptr<const Mollifier> kernel;
    /// Derivative measure of a BV base, cached (null for a smooth base).
    std::shared_ptr<const MeasureMatrix> base_measure;
};
}  // namespace drift

using DriftParams =
    std::variant<drift::Zero, drift::Constant, drift::Linear, drift::Sign, drift::Hyperplane, drift::Bump, drift::Mollified>;

/// A jump surface {x·n = c} of a piecewise-smooth drift.
struct JumpSurface {
    std::vector<double> normal;
    double offset = 0.0;
};

/// Drift field from the parametric catalog. Immutable after construction.
class DriftSpec {
public:
    DriftSpec(std::size_t dim, double bound_radius, DriftParams params);

    std::size_t dim() const noexcept { return dim_; }
    double bound_radius() const noexcept { return bound_radius_; }
    const Cutoff& cutoff() const noexcept { return cutoff_; }
    const DriftParams& params() const noexcept { return params_; }

    /// Catalog id: zero, constant, linear, sign1d, hyperplane, bump, mollified.
    std::string id() const;
    /// Smooth drifts provide gradient(); BV drifts provide a derivative measure.
    bool is_smooth() const noexcept;
    /// Bound on sup |a(t,x)| (Euclidean norm).
    double sup_norm() const noexcept { return sup_norm_; }

    void value(double t, std::span<const double> x, std::span<double> out) const;
    /// value() for d = 1.
    double value_1d(double t, double x) const;
    /// ∇a as row-major d×d (out[i*d + j] = ∂a^i/∂x_j). Throws ConfigError for BV drifts.
    void gradient(double t, std::span<const double> x, std::span<double> out) const;

    /// Distributional derivative μ^{ij}(dy) = ∂a^i/∂y_j. Smooth drifts
    /// report their gradient as density parts.
    MeasureMatrix derivative_measure() const;

    /// Discontinuity surfaces (empty for smooth drifts).
    std::vector<JumpSurface> jump_surfaces() const;

private:
    std::size_t dim_;
    double bound_radius_;
    Cutoff cutoff_;
    DriftParams params_;
    double sup_norm_ = 0.0;
};

namespace diffusion {
/// σ = I (requires m = d).
struct Identity {};
/// σ ≡ σ̃, row-major d×m.
struct Constant {
    std::vector<double> matrix;
};
/// σ(x) = diag(scale_i (1 + amplitude · bump((x - center)/radius))), m = d.
struct DiagonalBump {
    std::vector<double> scale;
    double amplitude = 0.0;
    std::vector<double> center;
    double radius = 1.0;
};
}  // namespace diffusion

using DiffusionParams = std::variant<diffusion::Identity, diffusion::Constant, diffusion::DiagonalBump>;

/// Diffusion columns σ_k, k = 1..m, from the catalog.
class DiffusionSpec {
public:
    DiffusionSpec(std::size_t dim, std::size_t noise_dim, DiffusionParams params);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t noise_dim() const noexcept { return noise_dim_; }
    const DiffusionParams& params() const noexcept { return params_; }
    std::string id() const;

    bool is_constant() const noexcept;
    /// σ(t,x) row-major d×m: out[i*m + k] = σ_k^i.
    void matrix(double t, std::span<const double> x, std::span<double> out) const;
    /// ∇σ_k row-major d×d.
    void gradient(double t, std::span<const double> x, std::size_t k, std::span<double> out) const;
    /// True when every ∇σ_k vanishes identically.
    bool has_zero_gradient() const noexcept;

    /// σ̃, the value outside the support of the variable part.
    std::vector<double> far_field() const;
    /// b = σσ* at (t, x), row-major d×d.
    std::vector<double> covariance(double t, std::span<const double> x) const;

    /// Exact ellipticity constant inf λ_min(σσ*) for the catalog forms.
    double ellipticity() const;
    /// Hölder constants (L, α) of condition (C3); the catalog is Lipschitz so α = 1.
    double hoelder_constant() const;
    double hoelder_exponent() const noexcept { return 1.0; }
    /// max over x of the largest eigenvalue of σσ*.
    double max_covariance_eigenvalue() const;
    /// Radius of a ball outside which σ equals far_field().
    double variable_radius() const noexcept;

private:
    std::size_t dim_;
    std::size_t noise_dim_;
    DiffusionParams params_;
};

/// Validated (a, σ) pair with the localization radius R and ellipticity B.
struct CoefficientSet {
    std::size_t dim = 1;
    std::size_t noise_dim = 1;
    std::shared_ptr<const DriftSpec> drift;
    std::shared_ptr<const DiffusionSpec> diffusion;
    double bound_radius = 0.0;
    double ellipticity = 0.0;

    /// Same diffusion, different drift (e.g. a mollified one).
    CoefficientSet with_drift(std::shared_ptr<const DriftSpec> new_drift) const;
};

/// Checks the structural invariants; throws ConfigError on violation.
/// `claimed_ellipticity` (if > 0) is spot-checked at `n_samples` points.
CoefficientSet make_coefficients(std::shared_ptr<const DriftSpec> drift, std::shared_ptr<const DiffusionSpec> diffusion,
                                 double claimed_ellipticity = 0.0, std::size_t n_samples = 256);

/// Smallest eigenvalue of a symmetric row-major d×d matrix.
double min_eigenvalue(std::span<const double> sym, std::size_t d);

}  // namespace flowgrad
