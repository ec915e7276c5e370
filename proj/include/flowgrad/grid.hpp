#pragma once

#include <cstddef>

namespace flowgrad {

/// Uniform discretization t_k = t0 + k * (T - t0) / n_steps of [t0, T].
class TimeGrid {
public:
    /// Throws ConfigError unless t0 >= 0, T > t0 and n_steps >= 1.
    TimeGrid(double t0, double horizon, std::size_t n_steps);

    double t0() const noexcept { return t0_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
    double step() const noexcept { return step_; }

    double node(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * step_; }

    /// Same interval with `factor` times as many steps; nodes of *this are
    /// every factor-th node of the result.
    TimeGrid refined(std::size_t factor) const;

    /// Sub-grid covering nodes [first, first + n_steps]; reuses the step bit-exactly.
    TimeGrid slice(std::size_t first, std::size_t n_steps) const;

    bool operator==(const TimeGrid& o) const noexcept {
        return t0_ == o.t0_ && horizon_ == o.horizon_ && n_steps_ == o.n_steps_;
    }

private:
    TimeGrid(double t0, double horizon, std::size_t n_steps, double step) noexcept
        : t0_(t0), horizon_(horizon), n_steps_(n_steps), step_(step) {}

    double t0_;
    double horizon_;
    std::size_t n_steps_;
    double step_;
};

}  // namespace flowgrad
