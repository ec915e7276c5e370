#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/density_grid.hpp"
#include "flowgrad/gaussian.hpp"

namespace flowgrad {

struct DensityParams {
    double half_width = 6.0;
    double spacing = 0.02;
    double s0 = 0.0;
    double horizon = 1.0;
    std::size_t n_times = 16;
    double tolerance = 1e-3;
    /// Rows with |x|_∞ <= half_width - interior_margin enter the mass,
    /// Chapman–Kolmogorov and envelope checks.
    double interior_margin = 4.0;
    std::size_t threads = 0;
};

/// Fitted Gaussian envelope constants on the interior rows, over the window
/// |y - x|² <= 49 b_max (t - s).
struct EnvelopeFit {
    double c_upper = 0.0;      ///< c₂
    double C_upper = 0.0;      ///< C₂
    double c_lower = 0.0;      ///< c₁
    double C_lower = 0.0;      ///< C₁ (positive when the lower bound holds on |y - x| <= 2)
    double c_gradient = 0.0;   ///< c′
    double C_gradient = 0.0;   ///< C′
    bool flagged = false;
};

/// G for a ≡ 0 on times s0 + kτ, k = 1..n_times. Constant σ gives the exact
/// Gaussian; variable σ uses a frozen-coefficient kernel with one correction
/// layer, renormalized per row with negatives clipped.
DensityGrid zero_drift_density(const DiffusionSpec& diffusion, const DensityParams& params);

struct PerturbationResult {
    DensityGrid density;
    /// residuals[k] = ‖G^{(k)} - g - Φ[G^{(k)}]‖_∞ = ‖G^{(k+1)} - G^{(k)}‖_∞, G^{(0)} = g.
    std::vector<double> residuals;
    /// Largest lattice mass of negative values removed from a row.
    double clipped_mass = 0.0;

    double residual(std::size_t k) const { return residuals.at(k); }
};

/// Jacobi–Picard sweeps for G = g + ∫∫ G a·∇_z g on the lattice of `g`.
/// Returns iterate K = `iterations`; one extra sweep measures its residual.
/// Throws NumericError if the residual increases between sweeps.
PerturbationResult perturbed_density(const DensityGrid& g, const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     std::size_t iterations, std::size_t threads = 0);

struct ConvergenceRow {
    int n = 0;
    double sup_restricted = 0.0;  ///< over t - s + |x - y| >= δ
    double sup_all = 0.0;         ///< δ = 0, for context
};

/// sup |G_n - G_ref| on the interior rows of a common lattice.
std::vector<ConvergenceRow> density_convergence_report(const std::vector<DensityGrid>& densities,
                                                       const std::vector<int>& levels, const DensityGrid& reference,
                                                       double delta, double interior_margin = 4.0);

/// max over interior rows and times of |Σ_y G δx^d - 1|.
double normalization_error(const DensityGrid& g, double interior_margin);
/// max |G(s0,x,t_a+t_b,y) - Σ_z G(s0,x,t_a,z) G(s0,z,t_b,y) δx^d| over interior x, y,
/// using time homogeneity; a and b index grid times.
double chapman_kolmogorov_deviation(const DensityGrid& g, std::size_t a, std::size_t b, double interior_margin);
EnvelopeFit fit_envelopes(const DensityGrid& g, double b_min, double b_max, double interior_margin);

/// ∫_{lo}^{hi} of the piecewise-linear interpolant of G(s0, x, times[ti], ·) (d = 1).
double interpolated_mass(const DensityGrid& g, std::size_t ti, std::size_t xi, double lo, double hi);
/// Bin masses over `bins` equal bins of [lo, hi] (d = 1).
std::vector<double> bin_masses(const DensityGrid& g, std::size_t ti, std::size_t xi, double lo, double hi,
                               std::size_t bins);

/// Writes `<stem>.bin` (binary64 little-endian, values in storage order) and
/// `<stem>_index.csv` (one line per (t, x) row with its byte offset).
void write_density(const DensityGrid& g, const std::string& stem);
DensityGrid read_density(const std::string& stem);

}  // namespace flowgrad
