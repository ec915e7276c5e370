#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flowgrad/gaussian.hpp"
#include "flowgrad/measure_types.hpp"

namespace flowgrad {

inline constexpr double kato_threshold = 1e-6;
inline constexpr std::size_t kato_strike_limit = 5;
inline constexpr std::size_t kato_schedule_length = 21;  ///< ε = 1, 1/2, ..., 2^-20

/// Result of classify_kato. For a Kato verdict `values` is the (eventually
/// decreasing) sequence of sup-integrals over the ε-schedule. For a non-Kato
/// verdict the witness triple (t0, x0, t) locates where the kernel integral
/// stays above the threshold.
struct KatoVerdict {
    bool is_kato = false;
    std::size_t dim = 0;
    std::vector<double> epsilons;
    std::vector<double> values;
    /// d = 1 only: sup over the grid of |μ|(B(x, 1)).
    double unit_ball_mass = 0.0;
    double witness_t0 = 0.0;
    std::vector<double> witness_x0;
    double witness_t = 0.0;
    double witness_value = 0.0;
};

/// ∫_0^t (2π s)^{-d/2} det(b)^{-1/2} exp(-q / 2s) ds for q = (y - x0)ᵀ b⁻¹ (y - x0).
double atom_time_integral(double q, std::size_t dim, double det, double t);

/// ∫_0^t ∫ p(s, x0, y) μ(dy) ds for the Gaussian kernel of `frame` (signed μ).
double heat_potential(const SpaceTimeMeasure& measure, std::span<const double> x0, double t,
                      const GaussianFrame& frame);

/// ∫_{t0}^{t0+t} ∫ p_0(t0, x0, s, y) |ν|(ds, dy) with p_0 the Brownian kernel.
/// Signed input is replaced by its variation.
double kato_integral(const SpaceTimeMeasure& measure, double t0, std::span<const double> x0, double t);

/// ∫_{|x0 - y| <= ε} K_d(|x0 - y|) ν(dy) for nonnegative ν, with K_1(r) = r,
/// K_2(r) = ln(1/r), K_d(r) = r^{2-d}. Hyperplane profiles are bounded by
/// their stated supremum.
double kato_ball_integral(const SpaceTimeMeasure& nonnegative, std::span<const double> x0, double eps);

/// Deterministic x0 grid: about `points` lattice nodes covering the support
/// inflated by 1, plus every atom location and hyperplane foot point.
std::vector<std::vector<double>> kato_grid(const SpaceTimeMeasure& measure, std::size_t points = 101);

KatoVerdict classify_kato(const SpaceTimeMeasure& measure, std::size_t grid_points = 101);

/// |S^{k-1}|, the surface area of the unit sphere in R^k.
double unit_sphere_area(std::size_t k);

}  // namespace flowgrad
