#include "flowgrad/grid.hpp"

#include <cmath>

#include "flowgrad/error.hpp"

namespace flowgrad {

TimeGrid::TimeGrid(double t0, double horizon, std::size_t n_steps)
    : t0_(t0), horizon_(horizon), n_steps_(n_steps), step_(0.0) {
    if (!(std::isfinite(t0) && std::isfinite(horizon)) || t0 < 0.0 || !(horizon > t0)) {
        throw ConfigError("time grid needs 0 <= t0 < T");
    }
    if (n_steps == 0) throw ConfigError("time grid needs at least one step");
    step_ = (horizon - t0) / static_cast<double>(n_steps);
    if (!(step_ > 0.0)) throw ConfigError("time grid step underflows");
}

TimeGrid TimeGrid::refined(std::size_t factor) const {
    if (factor == 0) throw ConfigError("refinement factor must be positive");
    return TimeGrid(t0_, horizon_, n_steps_ * factor);
}

TimeGrid TimeGrid::slice(std::size_t first, std::size_t n_steps) const {
    if (first + n_steps > n_steps_) throw ConfigError("grid slice exceeds the grid");
    return TimeGrid(node(first), node(first + n_steps), n_steps, step_);
}

}  // namespace flowgrad
