#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace flowgrad {

using ScalarField = std::function<double(std::span<const double>)>;

/// w · δ_y.
struct PointAtom {
    std::vector<double> location;
    double weight = 0.0;
};

/// w · profile(y) · dσ(y) on the hyperplane {y : y·n = c}, σ the surface
/// measure. `profile` must be nonnegative and bounded by `profile_sup`; an
/// empty profile means the constant 1. In d = 1 this is an atom at c·n.
struct HyperplaneAtom {
    std::vector<double> normal;  ///< unit vector
    double offset = 0.0;
    double weight = 0.0;
    ScalarField profile;
    double profile_sup = 1.0;

    double profile_at(std::span<const double> y) const { return profile ? profile(y) : 1.0; }
};

/// Bounded density h(y) dy. The support lies in the shell
/// inner_radius <= |y| <= outer_radius.
struct DensityPart {
    std::string id;
    ScalarField h;
    double sup_abs = 0.0;
    double inner_radius = 0.0;
    double outer_radius = std::numeric_limits<double>::infinity();
};

/// Signed measure ν(ds, dy) = μ(dy) ds on [0,∞) × R^d with a time-constant
/// spatial part μ made of densities, point atoms and hyperplane atoms.
class SpaceTimeMeasure {
public:
    explicit SpaceTimeMeasure(std::size_t dim = 1) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    const std::vector<PointAtom>& atoms() const noexcept { return atoms_; }
    const std::vector<HyperplaneAtom>& hyperplanes() const noexcept { return planes_; }
    const std::vector<DensityPart>& densities() const noexcept { return densities_; }

    SpaceTimeMeasure& add_atom(PointAtom atom);
    SpaceTimeMeasure& add_hyperplane(HyperplaneAtom plane);
    SpaceTimeMeasure& add_density(DensityPart part);

    bool empty() const noexcept { return atoms_.empty() && planes_.empty() && densities_.empty(); }

    /// Hahn–Jordan parts: each atom, hyperplane and density is split by sign.
    SpaceTimeMeasure positive_part() const;
    SpaceTimeMeasure negative_part() const;
    /// |ν| = ν⁺ + ν⁻.
    SpaceTimeMeasure variation() const;

    SpaceTimeMeasure scaled(double factor) const;
    SpaceTimeMeasure operator+(const SpaceTimeMeasure& other) const;

    /// μ of the box Π (lo_i, hi_i] (half-open per axis). Densities and
    /// hyperplanes with profiles by tensor Gauss–Legendre quadrature.
    double box_mass(std::span<const double> lo, std::span<const double> hi) const;

    /// Density value Σ h(y) of the absolutely continuous part.
    double density_at(std::span<const double> y) const;

    /// Radius of a ball about the origin holding the support, +inf when a
    /// hyperplane atom is present in d >= 2.
    double support_radius() const;

private:
    std::size_t dim_;
    std::vector<PointAtom> atoms_;
    std::vector<HyperplaneAtom> planes_;
    std::vector<DensityPart> densities_;
};

/// d×d matrix of measures, entry (i, j) = ∂a^i/∂y_j, row-major.
struct MeasureMatrix {
    std::size_t dim = 0;
    std::vector<SpaceTimeMeasure> entries;

    const SpaceTimeMeasure& at(std::size_t i, std::size_t j) const { return entries[i * dim + j]; }
    SpaceTimeMeasure& at(std::size_t i, std::size_t j) { return entries[i * dim + j]; }
};

/// Density parts of the catalog (used by configs and by tests).
DensityPart constant_ball_density(std::size_t dim, double value, double radius);
DensityPart gaussian_density(std::vector<double> center, double amplitude, double width);
DensityPart bump_density(std::vector<double> center, double amplitude, double radius);

}  // namespace flowgrad
