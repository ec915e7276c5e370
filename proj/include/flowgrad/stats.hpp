#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowgrad {

/// Monte Carlo estimate with its standard error.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Pairwise (cascade) summation in a fixed order; the result depends only on
/// the input sequence, never on how work was scheduled.
double pairwise_sum(std::span<const double> v) noexcept;

/// Mean and standard error of the mean, both reduced with pairwise_sum.
Estimate estimate(std::span<const double> samples);

/// Linear-interpolated empirical quantile (type 7), q in [0,1].
double quantile(std::vector<double> samples, double q);

/// Welford running mean/variance for streaming reductions.
class RunningStats {
public:
    void push(double x) noexcept;
    void merge(const RunningStats& other) noexcept;
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept;
    Estimate estimate() const noexcept;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace flowgrad
