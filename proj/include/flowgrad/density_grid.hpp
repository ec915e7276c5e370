#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flowgrad {

/// Uniform lattice on [-L, L]^d with spacing δx (points_per_axis = 2L/δx + 1).
struct Lattice {
    std::size_t dim = 1;
    double half_width = 1.0;
    double spacing = 0.1;
    std::size_t per_axis = 21;

    static Lattice make(std::size_t dim, double half_width, double spacing);

    std::size_t size() const noexcept;
    double coord(std::size_t i) const noexcept { return -half_width + static_cast<double>(i) * spacing; }
    /// Coordinates of flat point index p (last axis fastest).
    void point(std::size_t p, std::span<double> out) const noexcept;
    std::vector<double> point(std::size_t p) const;
    /// δx^d.
    double cell_volume() const noexcept;
    /// Flat index of the lattice point nearest to x, or size() if x lies outside.
    std::size_t nearest(std::span<const double> x) const noexcept;
};

/// G(s0, x, t, y) on times × lattice × lattice, stored row-major as
/// values[(ti * N + xi) * N + yi] with N = lattice.size().
struct DensityGrid {
    double s0 = 0.0;
    std::vector<double> times;
    Lattice lattice;
    std::vector<double> values;
    double tolerance = 1e-3;
    /// Diagnostics set by the producer (envelope fits, flags).
    std::vector<std::string> notes;

    std::size_t n_points() const noexcept { return lattice.size(); }
    double at(std::size_t ti, std::size_t xi, std::size_t yi) const noexcept {
        return values[(ti * n_points() + xi) * n_points() + yi];
    }
    std::span<const double> row(std::size_t ti, std::size_t xi) const noexcept {
        return {values.data() + (ti * n_points() + xi) * n_points(), n_points()};
    }
    std::span<double> row(std::size_t ti, std::size_t xi) noexcept {
        return {values.data() + (ti * n_points() + xi) * n_points(), n_points()};
    }
    /// Lattice sum Σ_y G δx^d.
    double mass(std::size_t ti, std::size_t xi) const noexcept;
};

}  // namespace flowgrad
