#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/functionals.hpp"
#include "flowgrad/grid.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/stats.hpp"

namespace flowgrad {

/// Y_k for k = 0..n_steps, each a row-major d×d matrix; Y_0 = E.
class MatrixPath {
public:
    MatrixPath(const TimeGrid& grid, std::size_t dim);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> at(std::size_t k) const noexcept { return {values_.data() + k * dim_ * dim_, dim_ * dim_}; }
    std::span<double> at(std::size_t k) noexcept { return {values_.data() + k * dim_ * dim_, dim_ * dim_}; }
    double entry(std::size_t k, std::size_t i, std::size_t j) const noexcept {
        return values_[(k * dim_ + i) * dim_ + j];
    }
    const std::vector<double>& values() const noexcept { return values_; }
    /// Frobenius norm of Y_k.
    double norm(std::size_t k) const noexcept;
    /// max_k |Y_k - other_k| (Frobenius).
    double max_distance(const MatrixPath& other) const;

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::vector<double> values_;
};

/// d×d matrix of functional paths A^{ij} on a common grid.
class FunctionalMatrix {
public:
    FunctionalMatrix(const TimeGrid& grid, std::size_t dim);
    FunctionalMatrix(std::size_t dim, std::vector<FunctionalPath> entries);

    std::size_t dim() const noexcept { return dim_; }
    const TimeGrid& grid() const noexcept { return entries_.front().grid(); }
    const FunctionalPath& at(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }
    FunctionalPath& at(std::size_t i, std::size_t j) { return entries_[i * dim_ + j]; }
    /// Row-major ΔA_k over [t_k, t_{k+1}].
    void increment(std::size_t k, std::span<double> out) const noexcept;
    /// Σ_{ij} Var A^{ij}_T.
    double total_variation() const noexcept;
    /// max_{k,ij} |ΔA^{ij}_k|.
    double max_increment() const noexcept;

private:
    std::size_t dim_;
    std::vector<FunctionalPath> entries_;
};

/// Builds A^{ij} = A^{μ^{ij}} for a BV drift, one W-functional per nonzero
/// entry of its derivative measure. Kato classification happens once here.
class DriftFunctionals {
public:
    DriftFunctionals(const MeasureMatrix& measure, double epsilon, Estimator estimator = Estimator::Band,
                     std::span<const double> covariance = {});

    FunctionalMatrix operator()(const PathBundle& bundle, std::size_t start_index = 0) const;
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
    std::vector<std::optional<WFunctional>> entries_;
};

/// Euler scheme Y_{k+1} = Y_k + ∇a Y_k Δ + Σ_k ∇σ_k Y_k ΔW_k along start `start_index`.
MatrixPath solve_variational_smooth(const CoefficientSet& coeffs, const PathBundle& bundle,
                                    std::size_t start_index = 0);

/// Y_{k+1} = Y_k + ΔA_k Y_k + Σ_k ∇σ_k Y_k ΔW_k. Throws ConfigError on a grid mismatch.
MatrixPath solve_variational_bv(const FunctionalMatrix& functionals, const DiffusionSpec& diffusion,
                                const PathBundle& bundle, std::size_t start_index = 0);

struct ZTransformResult {
    MatrixPath y;
    MatrixPath z;
    MatrixPath z_inverse;
};

/// Z_{k+1} = Z_k (E + ΔA_k)^{-1}, V = Z Y driven by Z ∇σ_k Z^{-1} only, Y = Z^{-1} V.
/// Throws NumericError when E + ΔA_k is singular.
ZTransformResult z_transform_solve(const FunctionalMatrix& functionals, const DiffusionSpec& diffusion,
                                   const PathBundle& bundle, std::size_t start_index = 0);

struct FdOptions {
    double functional_epsilon = 0.0125;
    Estimator estimator = Estimator::Band;
    std::uint64_t first_path_id = 0;
    std::size_t threads = 0;
    /// Draw the increments on a grid `noise_refine` times finer than `grid`
    /// and sum them down, so runs at different steps share the same noise.
    std::size_t noise_refine = 1;
};

struct FdRow {
    double epsilon = 0.0;
    Estimate discrepancy;
};

/// E |(φ_T(x + εv) - φ_T(x))/ε - Y_T(x) v|^p per ε under common noise, with
/// Y from the smooth solver (smooth drift) or the BV solver.
std::vector<FdRow> finite_difference_derivative(const CoefficientSet& coeffs, std::span<const double> x,
                                                std::span<const double> direction,
                                                const std::vector<double>& epsilons, const TimeGrid& grid,
                                                std::size_t n_paths, double p, std::uint64_t seed,
                                                const FdOptions& options = {});

}  // namespace flowgrad
