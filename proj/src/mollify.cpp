#include "flowgrad/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "flowgrad/error.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/rng.hpp"

namespace flowgrad {

namespace {

constexpr std::size_t cdf_cells = 2048;

double norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double raw_kernel(double r2) noexcept { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// I_d = ∫_{|x|<1} exp(-1/(1-|x|²)) dx.
double unit_mass(std::size_t d) {
    const double radial = integrate_adaptive(
        [d](double r) { return raw_kernel(r * r) * std::pow(r, static_cast<double>(d) - 1.0); }, 0.0, 1.0, 1e-15);
    return d == 1 ? 2.0 * radial : unit_sphere_area(d) * radial;
}

// Marginal density of the unit kernel (n = 1) along one axis.
double unit_marginal(std::size_t d, double mass, double s) {
    const double s2 = s * s;
    if (s2 >= 1.0) return 0.0;
    if (d == 1) return raw_kernel(s2) / mass;
    const double rho = std::sqrt(1.0 - s2);
    const double area = d == 2 ? 2.0 : unit_sphere_area(d - 1);
    const double inner = integrate_gl(
        [&](double r) { return raw_kernel(s2 + r * r) * std::pow(r, static_cast<double>(d) - 2.0); }, 0.0, rho, 32, 2);
    return area * inner / mass;
}

double convolve_measure(const SpaceTimeMeasure& mu, const Mollifier& k, std::span<const double> x) {
    const std::size_t d = mu.dim();
    const double h = k.radius();
    std::vector<double> z(d);
    double total = 0.0;
    for (const auto& a : mu.atoms()) {
        for (std::size_t i = 0; i < d; ++i) z[i] = x[i] - a.location[i];
        total += a.weight * k(z);
    }
    for (const auto& p : mu.hyperplanes()) {
        double u = -p.offset;
        for (std::size_t i = 0; i < d; ++i) u += p.normal[i] * x[i];
        if (std::fabs(u) >= h) continue;
        if (d == 1) {
            const double foot[1] = {p.offset * p.normal[0]};
            z[0] = x[0] - foot[0];
            total += p.weight * p.profile_at(foot) * k(z);
            continue;
        }
        if (!p.profile) {
            total += p.weight * k.marginal(u);
            continue;
        }
        const std::vector<double> frame = frame_from_normal(p.normal);
        const double rho = std::sqrt(h * h - u * u);
        const TensorRule rule = tensor_gauss(d - 1, rho, 32);
        std::vector<double> y(d);
        double s = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            for (std::size_t i = 0; i < d; ++i) y[i] = x[i] - u * p.normal[i];
            for (std::size_t m = 0; m + 1 < d; ++m) {
                const double v = rule.points[q * (d - 1) + m];
                for (std::size_t i = 0; i < d; ++i) y[i] += v * frame[(m + 1) * d + i];
            }
            for (std::size_t i = 0; i < d; ++i) z[i] = x[i] - y[i];
            s += rule.weights[q] * k(z) * p.profile_at(y);
        }
        total += p.weight * s;
    }
    if (!mu.densities().empty()) {
        const TensorRule& rule = k.rule();
        const double r = norm(x);
        std::vector<double> y(d);
        for (const auto& part : mu.densities()) {
            if (r + h < part.inner_radius || r - h > part.outer_radius) continue;
            double s = 0.0;
            for (std::size_t q = 0; q < rule.size(); ++q) {
                for (std::size_t i = 0; i < d; ++i) y[i] = x[i] - rule.points[q * d + i];
                const double ry = norm(y);
                if (ry < part.inner_radius || ry > part.outer_radius) continue;
                s += rule.weights[q] * part.h(y);
            }
            total += s;
        }
    }
    return total;
}

double measure_sup_bound(const SpaceTimeMeasure& mu, const Mollifier& k) {
    const std::vector<double> zero(mu.dim(), 0.0);
    double b = 0.0;
    for (const auto& a : mu.atoms()) b += std::fabs(a.weight) * k(zero);
    for (const auto& p : mu.hyperplanes())
        b += std::fabs(p.weight) * p.profile_sup * (mu.dim() == 1 ? k(zero) : k.marginal(0.0));
    for (const auto& part : mu.densities()) b += part.sup_abs;
    return b;
}

// Cumulative distribution of the marginal of the unit kernel on a table over
// [0, 1] with cubic Hermite interpolation; symmetric about 1/2.
struct MarginalCdf {
    std::vector<double> values;
    std::vector<double> slopes;

    MarginalCdf(std::size_t d, double mass) : values(cdf_cells + 1), slopes(cdf_cells + 1) {
        const double step = 1.0 / cdf_cells;
        std::vector<double> inc(cdf_cells);
        double total = 0.0;
        for (std::size_t c = 0; c < cdf_cells; ++c) {
            const double a = c * step;
            inc[c] = integrate_gl([&](double s) { return unit_marginal(d, mass, s); }, a, a + step, 16, 1);
            total += inc[c];
        }
        const double scale = 0.5 / total;
        values[0] = 0.5;
        for (std::size_t c = 0; c < cdf_cells; ++c) values[c + 1] = values[c] + scale * inc[c];
        values[cdf_cells] = 1.0;
        for (std::size_t c = 0; c <= cdf_cells; ++c) slopes[c] = scale * unit_marginal(d, mass, c * step);
    }

    double operator()(double s) const noexcept {
        if (s < 0.0) return 1.0 - (*this)(-s);
        if (s >= 1.0) return 1.0;
        const double pos = s * cdf_cells;
        const auto c = std::min<std::size_t>(static_cast<std::size_t>(pos), cdf_cells - 1);
        const double u = pos - static_cast<double>(c);
        const double h = 1.0 / cdf_cells;
        const double u2 = u * u, u3 = u2 * u;
        const double v = (2 * u3 - 3 * u2 + 1) * values[c] + (u3 - 2 * u2 + u) * h * slopes[c] +
                         (-2 * u3 + 3 * u2) * values[c + 1] + (u3 - u2) * h * slopes[c + 1];
        return std::clamp(v, 0.5, 1.0);
    }
};

const MarginalCdf& cdf_table(std::size_t d) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<MarginalCdf>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[d];
    if (!slot) slot = std::make_unique<MarginalCdf>(d, unit_mass(d));
    return *slot;
}

}  // namespace

std::vector<double> frame_from_normal(std::span<const double> normal) {
    const std::size_t d = normal.size();
    std::vector<double> q(d * d, 0.0);
    const double nn = norm(normal);
    for (std::size_t i = 0; i < d; ++i) q[i] = normal[i] / nn;
    std::size_t row = 1;
    for (std::size_t e = 0; e < d && row < d; ++e) {
        std::vector<double> v(d, 0.0);
        v[e] = 1.0;
        for (std::size_t r = 0; r < row; ++r) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += v[i] * q[r * d + i];
            for (std::size_t i = 0; i < d; ++i) v[i] -= dot * q[r * d + i];
        }
        const double len = norm(v);
        if (len < 1e-8) continue;
        for (std::size_t i = 0; i < d; ++i) q[row * d + i] = v[i] / len;
        ++row;
    }
    return q;
}

Mollifier::Mollifier(std::size_t dim, int n, std::size_t nodes_per_axis)
    : dim_(dim), n_(n), radius_(0.0), nodes_per_axis_(nodes_per_axis) {
    if (dim_ == 0) throw ConfigError("mollifier: dimension must be >= 1");
    if (n_ < 1) throw ConfigError("mollifier: n must be >= 1");
    if (nodes_per_axis_ < 2) throw ConfigError("mollifier: need at least two nodes per axis");
    radius_ = 1.0 / static_cast<double>(n_);
    unit_mass_ = unit_mass(dim_);
    normalization_ = std::pow(static_cast<double>(n_), static_cast<double>(dim_)) / unit_mass_;

    const TensorRule cube = tensor_gauss(dim_, radius_, nodes_per_axis_);
    rule_.dim = dim_;
    for (std::size_t p = 0; p < cube.size(); ++p) {
        const std::span<const double> z(cube.points.data() + p * dim_, dim_);
        const double w = cube.weights[p] * (*this)(z);
        if (w == 0.0) continue;
        rule_.points.insert(rule_.points.end(), z.begin(), z.end());
        rule_.weights.push_back(w);
    }
    raw_mass_ = 0.0;
    for (double w : rule_.weights) raw_mass_ += w;
    for (double& w : rule_.weights) w /= raw_mass_;
}

double Mollifier::operator()(std::span<const double> x) const noexcept {
    double r2 = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) r2 += x[i] * x[i];
    r2 *= static_cast<double>(n_) * static_cast<double>(n_);
    return normalization_ * raw_kernel(r2);
}

double Mollifier::marginal(double u) const {
    return static_cast<double>(n_) * unit_marginal(dim_, unit_mass_, u * static_cast<double>(n_));
}

double Mollifier::marginal_cdf(double u) const { return cdf_table(dim_)(u * static_cast<double>(n_)); }

TensorRule Mollifier::split_rule(const JumpSurface& jump, std::span<const double> x) const {
    const std::size_t d = dim_;
    const std::vector<double> frame = frame_from_normal(jump.normal);
    double s = -jump.offset;
    for (std::size_t k = 0; k < d; ++k) s += jump.normal[k] * x[k];
    const double h = radius_;
    const GaussRule& g = gauss_legendre(nodes_per_axis_);
    const std::size_t n = nodes_per_axis_;

    // Axis 0 (along the normal): two panels split at the jump.
    std::vector<double> u0, w0;
    for (const auto& [a, b] : {std::pair{-h, s}, std::pair{s, h}}) {
        const double half = 0.5 * (b - a);
        for (std::size_t i = 0; i < n; ++i) {
            u0.push_back(a + half * (g.nodes[i] + 1.0));
            w0.push_back(half * g.weights[i]);
        }
    }
    std::size_t rest = 1;
    for (std::size_t k = 1; k < d; ++k) rest *= n;

    TensorRule out;
    out.dim = d;
    std::vector<double> z(d);
    double mass = 0.0;
    for (std::size_t a = 0; a < u0.size(); ++a) {
        for (std::size_t p = 0; p < rest; ++p) {
            std::size_t rem = p;
            double w = w0[a];
            for (std::size_t i = 0; i < d; ++i) z[i] = u0[a] * frame[i];
            for (std::size_t k = 1; k < d; ++k) {
                const std::size_t idx = rem % n;
                rem /= n;
                const double v = h * g.nodes[idx];
                w *= h * g.weights[idx];
                for (std::size_t i = 0; i < d; ++i) z[i] += v * frame[k * d + i];
            }
            w *= (*this)(z);
            if (w == 0.0) continue;
            out.points.insert(out.points.end(), z.begin(), z.end());
            out.weights.push_back(w);
            mass += w;
        }
    }
    for (double& w : out.weights) w /= mass;
    return out;
}

void mollified_value(const drift::Mollified& m, double t, std::span<const double> x, std::span<double> out) {
    const DriftSpec& base = *m.base;
    const Mollifier& k = *m.kernel;
    const std::size_t d = base.dim();
    const double r = norm(x);
    const double h = k.radius();
    if (r - h >= base.bound_radius()) {
        std::fill(out.begin(), out.begin() + d, 0.0);
        return;
    }
    const bool flat = base.cutoff().is_one(r + h);
    if (flat) {
        if (const auto* p = std::get_if<drift::Sign>(&base.params())) {
            out[0] = p->kappa * (2.0 * k.marginal_cdf(x[0]) - 1.0);
            return;
        }
        if (const auto* p = std::get_if<drift::Hyperplane>(&base.params())) {
            double s = -p->offset;
            for (std::size_t i = 0; i < d; ++i) s += p->normal[i] * x[i];
            const double side = k.marginal_cdf(s) - 0.5;
            for (std::size_t i = 0; i < d; ++i) out[i] = p->jump[i] * side;
            return;
        }
    }
    k.convolve(x, d, base.jump_surfaces(),
               [&](std::span<const double> y, std::span<double> v) { base.value(t, y, v); }, out);
}

void mollified_gradient(const drift::Mollified& m, double t, std::span<const double> x, std::span<double> out) {
    const DriftSpec& base = *m.base;
    const Mollifier& k = *m.kernel;
    const std::size_t d = base.dim();
    if (norm(x) - k.radius() >= base.bound_radius()) {
        std::fill(out.begin(), out.begin() + d * d, 0.0);
        return;
    }
    if (m.base_measure) {
        for (std::size_t e = 0; e < d * d; ++e) out[e] = convolve_measure(m.base_measure->entries[e], k, x);
        return;
    }
    k.convolve(x, d * d, {}, [&](std::span<const double> y, std::span<double> v) { base.gradient(t, y, v); }, out);
}

std::shared_ptr<const DriftSpec> mollify_drift(std::shared_ptr<const DriftSpec> drift, int n) {
    if (!drift) throw ConfigError("mollify_drift: missing drift");
    if (n < 1) throw ConfigError("mollify_drift: n must be >= 1");
    const std::size_t d = drift->dim();
    drift::Mollified params;
    params.kernel = std::make_shared<const Mollifier>(d, n);
    if (!drift->is_smooth()) params.base_measure = std::make_shared<const MeasureMatrix>(drift->derivative_measure());
    params.base = drift;
    const double radius = drift->bound_radius() + params.kernel->radius();
    auto out = std::make_shared<const DriftSpec>(d, radius, std::move(params));

    const NormalStream stream(0x6d6f6c6cULL, static_cast<std::uint64_t>(n));
    std::vector<double> x(d), v(d);
    for (std::size_t s = 0; s < 64; ++s) {
        for (std::size_t i = 0; i < d; ++i) x[i] = stream.at(s * d + i) * radius / 2.0;
        out->value(0.0, x, v);
        if (norm(v) > drift->sup_norm() * (1.0 + 1e-12) + 1e-300)
            throw NumericError("mollified drift exceeds the sup norm of its base");
    }
    return out;
}

DensityPart mollify_measure_to_density(const SpaceTimeMeasure& measure, int n) {
    auto kernel = std::make_shared<const Mollifier>(measure.dim(), n);
    DensityPart part;
    part.id = "mollified";
    part.sup_abs = measure_sup_bound(measure, *kernel);
    part.inner_radius = 0.0;
    part.outer_radius = measure.support_radius() + kernel->radius();
    part.h = [measure, kernel](std::span<const double> y) { return convolve_measure(measure, *kernel, y); };
    return part;
}

}  // namespace flowgrad
