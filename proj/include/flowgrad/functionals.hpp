#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "flowgrad/density_grid.hpp"
#include "flowgrad/gaussian.hpp"
#include "flowgrad/grid.hpp"
#include "flowgrad/measure_types.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/stats.hpp"

namespace flowgrad {

/// A = A⁺ - A⁻ on the nodes of a grid, both parts nondecreasing from 0.
class FunctionalPath {
public:
    explicit FunctionalPath(const TimeGrid& grid);
    /// Throws NumericError unless both parts start at 0 and are nondecreasing.
    FunctionalPath(const TimeGrid& grid, std::vector<double> plus, std::vector<double> minus);

    /// Trapezoid rule along the nodes for the rate f_k at t_k, split by sign:
    /// A±_k = Δ · Σ_{j<k} (f±_j + f±_{j+1}) / 2.
    static FunctionalPath from_rates(const TimeGrid& grid, std::span<const double> rates);
    static FunctionalPath from_rates(const TimeGrid& grid, std::span<const double> plus_rates,
                                     std::span<const double> minus_rates);

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& plus() const noexcept { return plus_; }
    const std::vector<double>& minus() const noexcept { return minus_; }
    double value(std::size_t k) const noexcept { return plus_[k] - minus_[k]; }
    double variation(std::size_t k) const noexcept { return plus_[k] + minus_[k]; }
    double increment(std::size_t k) const noexcept { return value(k + 1) - value(k); }
    double terminal() const noexcept { return value(grid_.n_steps()); }
    /// max_k |A_{k+1} - A_k|.
    double max_increment() const noexcept;

    FunctionalPath operator+(const FunctionalPath& other) const;
    FunctionalPath scaled(double factor) const;

private:
    TimeGrid grid_;
    std::vector<double> plus_;
    std::vector<double> minus_;
};

using PathIntegrand = std::function<double(double t, std::span<const double> y)>;

/// ∫_0^t h(s, φ_s) ds by the trapezoid rule along the stored trajectory.
FunctionalPath integral_functional(const PathIntegrand& h, const PathBundle& bundle, std::size_t start_index = 0);

/// (1/2ε) ∫_0^t 1{|φ_s - y| <= ε} ds, d = 1 only.
FunctionalPath local_time_1d(const PathBundle& bundle, std::size_t start_index, double level, double epsilon);

/// Richardson combination 2 L^{ε} - L^{2ε} of two band estimates, node-wise.
std::vector<double> richardson(const FunctionalPath& fine, const FunctionalPath& coarse);

/// The ε-schedule used for band and characteristic approximations.
inline const std::vector<double>& epsilon_schedule() {
    static const std::vector<double> s{0.2, 0.1, 0.05, 0.025};
    return s;
}

enum class Estimator {
    Band,           ///< occupation bands (atoms in d = 1, hyperplanes), exact rates for densities
    Characteristic  ///< f_ε(φ_u)/ε with the Gaussian characteristic of each part
};

/// Additive functional A^ν of a Kato measure along flow paths. The measure is
/// classified once at construction (non-Kato input is rejected with a
/// ConfigError) and split into its Hahn–Jordan parts.
class WFunctional {
public:
    /// `covariance` is the constant b of the Gaussian surrogate kernel used by
    /// the characteristic estimator (identity when empty).
    WFunctional(const SpaceTimeMeasure& measure, double epsilon, Estimator estimator = Estimator::Band,
                std::span<const double> covariance = {});

    FunctionalPath operator()(const PathBundle& bundle, std::size_t start_index = 0) const;
    /// Rate of the + and - parts at a point.
    void rates(std::span<const double> y, double& plus, double& minus) const;

    const SpaceTimeMeasure& measure() const noexcept { return measure_; }
    double epsilon() const noexcept { return epsilon_; }
    bool trivial() const noexcept { return measure_.empty(); }

private:
    double part_rate(const SpaceTimeMeasure& part, std::span<const double> y) const;

    SpaceTimeMeasure measure_;
    SpaceTimeMeasure plus_;
    SpaceTimeMeasure minus_;
    double epsilon_;
    Estimator estimator_;
    GaussianFrame frame_;
};

FunctionalPath w_functional(const SpaceTimeMeasure& measure, const PathBundle& bundle, std::size_t start_index,
                            double epsilon, Estimator estimator = Estimator::Band);

/// f_t(t0, x0) = ∫_{t0}^{t0+t} ∫ p(t0, x0, s, y) μ(dy) ds with the Gaussian kernel of covariance b.
double characteristic_of(const SpaceTimeMeasure& measure, std::span<const double> covariance, double t0,
                         std::span<const double> x0, double t);
/// Same with a tabulated transition density. The first time interval uses the
/// Gaussian kernel of `covariance`; later intervals use the trapezoid rule over
/// the grid times. Throws ConfigError on a coverage gap.
double characteristic_of(const SpaceTimeMeasure& measure, const DensityGrid& density,
                         std::span<const double> covariance, double t0, std::span<const double> x0, double t);

/// E exp(p · A) with standard error; throws NumericError if some p·A > 700.
Estimate exp_moment_estimate(std::span<const double> values, double p);
/// Uses A⁺ at the final node of each path.
Estimate exp_moment_estimate(const std::vector<FunctionalPath>& paths, double p);

}  // namespace flowgrad
