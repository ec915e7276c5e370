#include "flowgrad/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "flowgrad/error.hpp"
#include "flowgrad/parallel.hpp"
#include "flowgrad/rng.hpp"

namespace flowgrad {

WienerIncrements::WienerIncrements(TimeGrid grid, std::size_t noise_dim, std::vector<double> values)
    : grid_(grid), m_(noise_dim), values_(std::move(values)) {
    if (m_ == 0) throw ConfigError("increments: noise dimension must be >= 1");
    if (values_.size() != grid_.n_steps() * m_) throw ConfigError("increments: array must be n_steps x m");
}

WienerIncrements WienerIncrements::generate(const TimeGrid& grid, std::size_t noise_dim, std::uint64_t seed,
                                            std::uint64_t path_id, std::size_t first_step) {
    std::vector<double> v(grid.n_steps() * noise_dim);
    NormalStream(seed, path_id).fill(static_cast<std::uint64_t>(first_step) * noise_dim, v);
    const double sd = std::sqrt(grid.step());
    for (double& x : v) x *= sd;
    return WienerIncrements(grid, noise_dim, std::move(v));
}

WienerIncrements WienerIncrements::zeros(const TimeGrid& grid, std::size_t noise_dim) {
    return WienerIncrements(grid, noise_dim, std::vector<double>(grid.n_steps() * noise_dim, 0.0));
}

WienerIncrements WienerIncrements::coarsened(std::size_t factor) const {
    if (factor == 0 || grid_.n_steps() % factor != 0) throw ConfigError("coarsening factor must divide n_steps");
    const TimeGrid coarse(grid_.t0(), grid_.horizon(), grid_.n_steps() / factor);
    std::vector<double> v(coarse.n_steps() * m_, 0.0);
    for (std::size_t k = 0; k < coarse.n_steps(); ++k)
        for (std::size_t f = 0; f < factor; ++f)
            for (std::size_t j = 0; j < m_; ++j) v[k * m_ + j] += values_[(k * factor + f) * m_ + j];
    return WienerIncrements(coarse, m_, std::move(v));
}

WienerIncrements WienerIncrements::slice(std::size_t first, std::size_t n_steps) const {
    if (first + n_steps > grid_.n_steps()) throw ConfigError("increment slice out of range");
    std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(first * m_),
                          values_.begin() + static_cast<std::ptrdiff_t>((first + n_steps) * m_));
    return WienerIncrements(grid_.slice(first, n_steps), m_, std::move(v));
}

PathBundle simulate_flow(const CoefficientSet& coeffs, const std::vector<std::vector<double>>& starts,
                         const WienerIncrements& increments, std::uint64_t seed, std::uint64_t path_id) {
    const std::size_t d = coeffs.dim, m = coeffs.noise_dim;
    if (starts.empty()) throw ConfigError("simulate_flow: at least one start is required");
    if (increments.noise_dim() != m) throw ConfigError("simulate_flow: increments have the wrong noise dimension");
    for (const auto& s : starts)
        if (s.size() != d) throw ConfigError("simulate_flow: start has the wrong dimension");

    const TimeGrid& grid = increments.grid();
    const std::size_t n = grid.n_steps();
    const double dt = grid.step();
    const DriftSpec& drift = *coeffs.drift;
    const DiffusionSpec& diff = *coeffs.diffusion;
    const bool zero_drift = std::holds_alternative<drift::Zero>(drift.params());
    const bool constant_sigma = diff.is_constant();

    PathBundle bundle{grid, increments, starts, {}, seed, path_id, d};
    bundle.trajectories.resize(starts.size());
    std::vector<double> a(d, 0.0), sigma(d * m), x(d);
    if (constant_sigma) diff.matrix(grid.t0(), starts.front(), sigma);

    if (d == 1 && m == 1 && constant_sigma) {
        const double sig = sigma[0];
        const double* dw = increments.values().data();
        for (std::size_t s = 0; s < starts.size(); ++s) {
            std::vector<double>& traj = bundle.trajectories[s];
            traj.resize(n + 1);
            double xs = starts[s][0];
            traj[0] = xs;
            if (zero_drift) {
                for (std::size_t k = 0; k < n; ++k) {
                    xs = xs + sig * dw[k];
                    traj[k + 1] = xs;
                }
                continue;
            }
            for (std::size_t k = 0; k < n; ++k) {
                xs = xs + drift.value_1d(grid.node(k), xs) * dt + sig * dw[k];
                traj[k + 1] = xs;
            }
        }
        return bundle;
    }

    for (std::size_t s = 0; s < starts.size(); ++s) {
        std::vector<double>& traj = bundle.trajectories[s];
        traj.resize((n + 1) * d);
        std::copy(starts[s].begin(), starts[s].end(), traj.begin());
        x = starts[s];
        for (std::size_t k = 0; k < n; ++k) {
            const double t = grid.node(k);
            if (!zero_drift) drift.value(t, x, a);
            if (!constant_sigma) diff.matrix(t, x, sigma);
            const std::span<const double> dw = increments.row(k);
            for (std::size_t i = 0; i < d; ++i) {
                double noise = 0.0;
                for (std::size_t j = 0; j < m; ++j) noise += sigma[i * m + j] * dw[j];
                x[i] = x[i] + a[i] * dt + noise;
            }
            std::copy(x.begin(), x.end(), traj.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        }
    }
    return bundle;
}

PathBundle simulate_flow(const CoefficientSet& coeffs, const std::vector<std::vector<double>>& starts,
                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_id) {
    return simulate_flow(coeffs, starts, WienerIncrements::generate(grid, coeffs.noise_dim, seed, path_id), seed,
                         path_id);
}

std::vector<double> monte_carlo_samples(std::size_t n_paths, const std::function<double(std::uint64_t)>& sample,
                                        std::uint64_t first_path_id, std::size_t threads) {
    std::vector<double> out(n_paths);
    parallel_for(
        n_paths, [&](std::size_t i) { out[i] = sample(first_path_id + i); }, threads);
    return out;
}

Estimate strong_error(const CoefficientSet& a, const CoefficientSet& b, std::span<const double> start,
                      const TimeGrid& grid, std::size_t n_paths, double p, std::uint64_t seed,
                      std::uint64_t first_path_id, std::size_t threads) {
    if (a.dim != b.dim || a.noise_dim != b.noise_dim) throw ConfigError("strong_error: (d, m) must agree");
    if (!(p >= 1.0)) throw ConfigError("strong_error: p must be >= 1");
    if (n_paths == 0) throw ConfigError("strong_error: n_paths must be positive");
    const std::vector<std::vector<double>> starts{std::vector<double>(start.begin(), start.end())};
    const std::vector<double> samples = monte_carlo_samples(
        n_paths,
        [&](std::uint64_t id) {
            const WienerIncrements inc = WienerIncrements::generate(grid, a.noise_dim, seed, id);
            const PathBundle pa = simulate_flow(a, starts, inc, seed, id);
            const PathBundle pb = simulate_flow(b, starts, inc, seed, id);
            double sup = 0.0;
            for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.dim; ++i) {
                    const double e = pa.state(0, k, i) - pb.state(0, k, i);
                    s += e * e;
                }
                sup = std::max(sup, s);
            }
            return std::pow(std::sqrt(sup), p);
        },
        first_path_id, threads);
    return estimate(samples);
}

}  // namespace flowgrad
