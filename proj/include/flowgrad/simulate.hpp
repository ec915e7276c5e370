#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/grid.hpp"
#include "flowgrad/stats.hpp"

namespace flowgrad {

/// n_steps × m Wiener increments, row k holding ΔW over [t_k, t_{k+1}].
class WienerIncrements {
public:
    WienerIncrements(TimeGrid grid, std::size_t noise_dim, std::vector<double> values);

    /// Increments √Δ·ξ from NormalStream(seed, path_id); step k uses variates
    /// (first_step + k)·m ... (first_step + k)·m + m - 1.
    static WienerIncrements generate(const TimeGrid& grid, std::size_t noise_dim, std::uint64_t seed,
                                     std::uint64_t path_id, std::size_t first_step = 0);
    static WienerIncrements zeros(const TimeGrid& grid, std::size_t noise_dim);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t noise_dim() const noexcept { return m_; }
    std::span<const double> row(std::size_t k) const noexcept { return {values_.data() + k * m_, m_}; }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Sums of `factor` consecutive increments on grid().refined-inverse.
    WienerIncrements coarsened(std::size_t factor) const;
    /// Steps [first, first + n_steps).
    WienerIncrements slice(std::size_t first, std::size_t n_steps) const;

private:
    TimeGrid grid_;
    std::size_t m_;
    std::vector<double> values_;
};

/// Flow trajectories from several starts driven by one increment array.
struct PathBundle {
    TimeGrid grid;
    WienerIncrements increments;
    std::vector<std::vector<double>> starts;
    std::vector<std::vector<double>> trajectories;  ///< per start, (n_steps + 1) × d row-major
    std::uint64_t seed = 0;
    std::uint64_t path_id = 0;
    std::size_t dim = 1;

    std::span<const double> point(std::size_t start, std::size_t k) const noexcept {
        return {trajectories[start].data() + k * dim, dim};
    }
    double state(std::size_t start, std::size_t k, std::size_t i = 0) const noexcept {
        return trajectories[start][k * dim + i];
    }
};

/// Euler–Maruyama X_{k+1} = X_k + a(t_k, X_k)Δ + σ(t_k, X_k)ΔW_k for every start.
PathBundle simulate_flow(const CoefficientSet& coeffs, const std::vector<std::vector<double>>& starts,
                         const WienerIncrements& increments, std::uint64_t seed = 0, std::uint64_t path_id = 0);
PathBundle simulate_flow(const CoefficientSet& coeffs, const std::vector<std::vector<double>>& starts,
                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_id);

/// Monte Carlo estimate of E sup_k |X^a_k - X^b_k|^p under common noise.
/// Path i uses substream (seed, first_path_id + i).
Estimate strong_error(const CoefficientSet& a, const CoefficientSet& b, std::span<const double> start,
                      const TimeGrid& grid, std::size_t n_paths, double p, std::uint64_t seed,
                      std::uint64_t first_path_id = 0, std::size_t threads = 0);

/// Evaluate `sample(path_id)` for path ids first..first+n-1 in parallel and
/// return the samples in path order.
std::vector<double> monte_carlo_samples(std::size_t n_paths, const std::function<double(std::uint64_t)>& sample,
                                        std::uint64_t first_path_id = 0, std::size_t threads = 0);

}  // namespace flowgrad
