#include "flowgrad/functionals.hpp"

#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <cmath>

#include "flowgrad/error.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/quadrature.hpp"

namespace flowgrad {

namespace {

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> trapezoid(const TimeGrid& grid, std::span<const double> rates) {
    const std::size_t n = grid.n_steps();
    std::vector<double> out(n + 1, 0.0);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += 0.5 * (rates[k] + rates[k + 1]);
        out[k + 1] = grid.step() * s;
    }
    return out;
}

// Multilinear interpolation stencil of a point on the lattice.
std::vector<std::pair<std::size_t, double>> stencil(const Lattice& lat, std::span<const double> x) {
    const std::size_t d = lat.dim;
    std::vector<std::size_t> lo(d);
    std::vector<double> frac(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double pos = (x[k] + lat.half_width) / lat.spacing;
        if (pos < -1e-9 || pos > static_cast<double>(lat.per_axis - 1) + 1e-9) return {};
        const double c = std::clamp(pos, 0.0, static_cast<double>(lat.per_axis - 1));
        lo[k] = std::min(static_cast<std::size_t>(c), lat.per_axis - 2);
        frac[k] = c - static_cast<double>(lo[k]);
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        std::size_t idx = 0;
        double w = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            const bool up = (corner >> (d - 1 - k)) & 1U;
            idx = idx * lat.per_axis + lo[k] + (up ? 1 : 0);
            w *= up ? frac[k] : 1.0 - frac[k];
        }
        if (w != 0.0) out.emplace_back(idx, w);
    }
    return out;
}

// Σ_y G(ti, xi, y) μ(dy) over the lattice.
double lattice_pairing(const SpaceTimeMeasure& mu, const DensityGrid& g, std::size_t ti, std::size_t xi) {
    const Lattice& lat = g.lattice;
    const std::size_t d = lat.dim;
    const std::span<const double> row = g.row(ti, xi);
    double total = 0.0;
    auto at_point = [&](std::span<const double> y) {
        double v = 0.0;
        for (const auto& [idx, w] : stencil(lat, y)) v += w * row[idx];
        return v;
    };
    for (const auto& a : mu.atoms()) total += a.weight * at_point(a.location);
    for (const auto& p : mu.hyperplanes()) {
        if (d == 1) {
            const double y[1] = {p.offset * p.normal[0]};
            total += p.weight * p.profile_at(y) * at_point(y);
            continue;
        }
        if (d != 2) throw ConfigError("hyperplane pairing on a lattice needs d <= 2");
        const double h = 0.5 * lat.spacing;
        const double span = std::sqrt(2.0) * lat.half_width;
        const double tang[2] = {-p.normal[1], p.normal[0]};
        double s = 0.0;
        for (double u = -span; u <= span; u += h) {
            const double y[2] = {p.offset * p.normal[0] + u * tang[0], p.offset * p.normal[1] + u * tang[1]};
            s += p.profile_at(y) * at_point(y) * h;
        }
        total += p.weight * s;
    }
    if (!mu.densities().empty()) {
        std::vector<double> y(d);
        const double vol = lat.cell_volume();
        for (std::size_t yi = 0; yi < lat.size(); ++yi) {
            if (row[yi] == 0.0) continue;
            lat.point(yi, y);
            total += row[yi] * mu.density_at(y) * vol;
        }
    }
    return total;
}

}  // namespace

// FunctionalPath -------------------------------------------------------------

FunctionalPath::FunctionalPath(const TimeGrid& grid)
    : grid_(grid), plus_(grid.n_nodes(), 0.0), minus_(grid.n_nodes(), 0.0) {}

FunctionalPath::FunctionalPath(const TimeGrid& grid, std::vector<double> plus, std::vector<double> minus)
    : grid_(grid), plus_(std::move(plus)), minus_(std::move(minus)) {
    if (plus_.size() != grid_.n_nodes() || minus_.size() != grid_.n_nodes())
        throw ConfigError("functional path: arrays must have n_steps + 1 entries");
    if (plus_[0] != 0.0 || minus_[0] != 0.0) throw NumericError("functional path must start at 0");
    for (std::size_t k = 1; k < plus_.size(); ++k)
        if (plus_[k] < plus_[k - 1] || minus_[k] < minus_[k - 1])
            throw NumericError("functional path parts must be nondecreasing");
}

FunctionalPath FunctionalPath::from_rates(const TimeGrid& grid, std::span<const double> rates) {
    if (rates.size() != grid.n_nodes()) throw ConfigError("rates must have n_steps + 1 entries");
    std::vector<double> p(rates.size()), m(rates.size());
    for (std::size_t k = 0; k < rates.size(); ++k) {
        p[k] = std::max(rates[k], 0.0);
        m[k] = std::max(-rates[k], 0.0);
    }
    return from_rates(grid, p, m);
}

FunctionalPath FunctionalPath::from_rates(const TimeGrid& grid, std::span<const double> plus_rates,
                                          std::span<const double> minus_rates) {
    if (plus_rates.size() != grid.n_nodes() || minus_rates.size() != grid.n_nodes())
        throw ConfigError("rates must have n_steps + 1 entries");
    return FunctionalPath(grid, trapezoid(grid, plus_rates), trapezoid(grid, minus_rates));
}

double FunctionalPath::max_increment() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k + 1 < plus_.size(); ++k) m = std::max(m, std::fabs(increment(k)));
    return m;
}

FunctionalPath FunctionalPath::operator+(const FunctionalPath& other) const {
    if (!(other.grid_ == grid_)) throw ConfigError("functional paths live on different grids");
    FunctionalPath out = *this;
    for (std::size_t k = 0; k < plus_.size(); ++k) {
        out.plus_[k] += other.plus_[k];
        out.minus_[k] += other.minus_[k];
    }
    return out;
}

FunctionalPath FunctionalPath::scaled(double factor) const {
    FunctionalPath out = *this;
    if (factor < 0.0) std::swap(out.plus_, out.minus_);
    const double f = std::fabs(factor);
    for (std::size_t k = 0; k < plus_.size(); ++k) {
        out.plus_[k] *= f;
        out.minus_[k] *= f;
    }
    return out;
}

// Functionals ----------------------------------------------------------------

FunctionalPath integral_functional(const PathIntegrand& h, const PathBundle& bundle, std::size_t start_index) {
    const TimeGrid& grid = bundle.grid;
    std::vector<double> rates(grid.n_nodes());
    for (std::size_t k = 0; k < rates.size(); ++k) rates[k] = h(grid.node(k), bundle.point(start_index, k));
    return FunctionalPath::from_rates(grid, rates);
}

FunctionalPath local_time_1d(const PathBundle& bundle, std::size_t start_index, double level, double epsilon) {
    if (bundle.dim != 1) throw ConfigError("local time at a point exists only for d = 1");
    if (!(epsilon > 0.0)) throw ConfigError("local time needs epsilon > 0");
    const TimeGrid& grid = bundle.grid;
    const std::size_t n = grid.n_steps();
    const double dt = grid.step(), f = 1.0 / (2.0 * epsilon);
    std::vector<double> plus(n + 1, 0.0);
    double s = 0.0;
    double prev = std::fabs(bundle.state(start_index, 0) - level) <= epsilon ? 1.0 : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double next = std::fabs(bundle.state(start_index, k + 1) - level) <= epsilon ? 1.0 : 0.0;
        s += 0.5 * (prev + next);
        plus[k + 1] = (dt * s) * f;
        prev = next;
    }
    return FunctionalPath(grid, std::move(plus), std::vector<double>(n + 1, 0.0));
}

std::vector<double> richardson(const FunctionalPath& fine, const FunctionalPath& coarse) {
    if (!(fine.grid() == coarse.grid())) throw ConfigError("richardson: grids differ");
    std::vector<double> out(fine.grid().n_nodes());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = 2.0 * fine.value(k) - coarse.value(k);
    return out;
}

WFunctional::WFunctional(const SpaceTimeMeasure& measure, double epsilon, Estimator estimator,
                         std::span<const double> covariance)
    : measure_(measure),
      plus_(measure.positive_part()),
      minus_(measure.negative_part()),
      epsilon_(epsilon),
      estimator_(estimator),
      frame_(make_gaussian_frame(covariance, measure.dim())) {
    if (!(epsilon_ > 0.0)) throw ConfigError("w_functional: epsilon must be positive");
    if (!measure_.empty() && !classify_kato(measure_).is_kato)
        throw ConfigError("w_functional: the measure is not of Kato class");
}

double WFunctional::part_rate(const SpaceTimeMeasure& part, std::span<const double> y) const {
    const std::size_t d = part.dim();
    const double eps = epsilon_;
    double r = 0.0;
    if (estimator_ == Estimator::Band) {
        for (const auto& a : part.atoms())
            if (std::fabs(y[0] - a.location[0]) <= eps) r += a.weight / (2.0 * eps);
        for (const auto& p : part.hyperplanes())
            if (std::fabs(dot(y, p.normal) - p.offset) <= eps) r += p.weight * p.profile_at(y) / (2.0 * eps);
        if (part.densities().empty()) return r;
        const double ry = d == 1 ? std::fabs(y[0]) : std::sqrt(dot(y, y));
        for (const auto& q : part.densities())
            if (ry >= q.inner_radius && ry <= q.outer_radius) r += q.h(y);
        return r;
    }
    for (const auto& a : part.atoms()) r += a.weight * atom_time_integral(frame_.quadratic(y, a.location), d, frame_.det, eps);
    for (const auto& p : part.hyperplanes()) {
        std::vector<double> bn(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) bn[i] += frame_.cov[i * d + j] * p.normal[j];
        const double v = dot(bn, p.normal);
        const double delta = dot(y, p.normal) - p.offset;
        std::vector<double> foot(y.begin(), y.end());
        for (std::size_t i = 0; i < d; ++i) foot[i] -= delta * p.normal[i];
        r += p.weight * p.profile_at(foot) * heat_kernel_time_integral_1d(delta / std::sqrt(v), eps) / std::sqrt(v);
    }
    if (!part.densities().empty()) {
        // (1/ε)∫_0^ε E h(y + √s L ξ) ds with s = u², fixed Gauss–Legendre × Gauss–Hermite rule.
        const GaussRule& gl = gauss_legendre(8);
        const GaussRule& gh = gauss_hermite(d == 1 ? 16 : (d == 2 ? 8 : 6));
        const std::size_t n = gh.nodes.size();
        std::size_t total = 1;
        for (std::size_t k = 0; k < d; ++k) total *= n;
        std::vector<double> z(d);
        const double top = std::sqrt(eps);
        double acc = 0.0;
        for (std::size_t a = 0; a < gl.nodes.size(); ++a) {
            const double u = 0.5 * top * (gl.nodes[a] + 1.0);
            const double wu = 0.5 * top * gl.weights[a] * 2.0 * u;
            double e = 0.0;
            for (std::size_t q = 0; q < total; ++q) {
                std::size_t rem = q;
                double w = 1.0;
                std::vector<double> xi(d);
                for (std::size_t k = 0; k < d; ++k) {
                    const std::size_t idx = rem % n;
                    rem /= n;
                    xi[k] = gh.nodes[idx];
                    w *= gh.weights[idx];
                }
                for (std::size_t i = 0; i < d; ++i) {
                    z[i] = y[i];
                    for (std::size_t j = 0; j <= i; ++j) z[i] += u * frame_.chol[i * d + j] * xi[j];
                }
                e += w * part.density_at(z);
            }
            acc += wu * e;
        }
        r += acc;
    }
    return r / eps;
}

void WFunctional::rates(std::span<const double> y, double& plus, double& minus) const {
    plus = part_rate(plus_, y);
    minus = part_rate(minus_, y);
}

FunctionalPath WFunctional::operator()(const PathBundle& bundle, std::size_t start_index) const {
    if (bundle.dim != measure_.dim()) throw ConfigError("w_functional: dimension mismatch");
    const TimeGrid& grid = bundle.grid;
    if (measure_.empty()) return FunctionalPath(grid);
    const std::size_t n = grid.n_steps();
    std::vector<double> p(n + 1), m(n + 1);
    for (std::size_t k = 0; k <= n; ++k) rates(bundle.point(start_index, k), p[k], m[k]);
    // Running trapezoid sums in place.
    double sp = 0.0, sm = 0.0, prev_p = p[0], prev_m = m[0];
    p[0] = 0.0;
    m[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sp += 0.5 * (prev_p + p[k + 1]);
        sm += 0.5 * (prev_m + m[k + 1]);
        prev_p = p[k + 1];
        prev_m = m[k + 1];
        p[k + 1] = grid.step() * sp;
        m[k + 1] = grid.step() * sm;
    }
    return FunctionalPath(grid, std::move(p), std::move(m));
}

FunctionalPath w_functional(const SpaceTimeMeasure& measure, const PathBundle& bundle, std::size_t start_index,
                            double epsilon, Estimator estimator) {
    return WFunctional(measure, epsilon, estimator)(bundle, start_index);
}

double characteristic_of(const SpaceTimeMeasure& measure, std::span<const double> covariance, double t0,
                         std::span<const double> x0, double t) {
    if (!(t0 >= 0.0)) throw ConfigError("characteristic: t0 must be >= 0");
    if (t == 0.0) return 0.0;
    return heat_potential(measure, x0, t, make_gaussian_frame(covariance, measure.dim()));
}

double characteristic_of(const SpaceTimeMeasure& measure, const DensityGrid& density,
                         std::span<const double> covariance, double t0, std::span<const double> x0, double t) {
    if (t == 0.0) return 0.0;
    if (!(t > 0.0)) throw ConfigError("characteristic: t must be >= 0");
    if (density.lattice.dim != measure.dim() || x0.size() != measure.dim())
        throw ConfigError("characteristic: dimension mismatch");
    if (std::fabs(t0 - density.s0) > 1e-12 || density.times.empty())
        throw ConfigError("characteristic: density grid does not cover the start time (coverage gap)");
    const double end = t0 + t;
    if (end > density.times.back() * (1.0 + 1e-12))
        throw ConfigError("characteristic: density grid does not cover [t0, t0 + t] (coverage gap)");
    const auto st = stencil(density.lattice, x0);
    if (st.empty()) throw ConfigError("characteristic: x0 lies outside the lattice (coverage gap)");

    const GaussianFrame frame = make_gaussian_frame(covariance, measure.dim());
    const double first = density.times.front();
    if (end <= first) return heat_potential(measure, x0, t, frame);
    double total = heat_potential(measure, x0, first - t0, frame);

    auto integrand = [&](std::size_t ti) {
        double v = 0.0;
        for (const auto& [idx, w] : st) v += w * lattice_pairing(measure, density, ti, idx);
        return v;
    };
    double prev = integrand(0);
    for (std::size_t ti = 1; ti < density.times.size(); ++ti) {
        const double a = density.times[ti - 1], b = density.times[ti];
        if (a >= end) break;
        const double cur = integrand(ti);
        if (b <= end) {
            total += 0.5 * (b - a) * (prev + cur);
        } else {
            const double theta = (end - a) / (b - a);
            const double mid = prev + theta * (cur - prev);
            total += 0.5 * (end - a) * (prev + mid);
        }
        prev = cur;
    }
    return total;
}

Estimate exp_moment_estimate(std::span<const double> values, double p) {
    if (!(p > 0.0)) throw ConfigError("exp moment: p must be positive");
    std::vector<double> e(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = p * values[i];
        if (x > 700.0) throw NumericError("exp moment: exponent exceeds 700 (overflow)");
        e[i] = std::exp(x);
    }
    return estimate(e);
}

Estimate exp_moment_estimate(const std::vector<FunctionalPath>& paths, double p) {
    std::vector<double> a(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) a[i] = paths[i].plus().back();
    return exp_moment_estimate(a, p);
}

}  // namespace flowgrad
