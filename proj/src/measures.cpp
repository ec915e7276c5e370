#include "flowgrad/measures.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <functional>
#include <limits>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/quadrature.hpp"

namespace flowgrad {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> foot_point(const HyperplaneAtom& p) {
    std::vector<double> y(p.normal.size());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = p.offset * p.normal[k];
    return y;
}

bool shell_hits_ball(const DensityPart& part, std::span<const double> x, double radius) noexcept {
    const double r = norm(x);
    return r + radius >= part.inner_radius && r - radius <= part.outer_radius;
}

// ∫_0^{√t} f(u) du by composite Gauss–Legendre, doubling the panel count.
double doubling_gl(const std::function<double(double)>& f, double upper, double rel_tol = 1e-9) {
    std::size_t panels = 4;
    double prev = integrate_gl(f, 0.0, upper, 16, panels);
    double err = inf;
    for (; panels <= 512; panels *= 2) {
        const double next = integrate_gl(f, 0.0, upper, 16, 2 * panels);
        err = std::fabs(next - prev);
        if (err <= rel_tol * std::max(1.0, std::fabs(next)) + 1e-15) return next;
        prev = next;
    }
    throw QuadratureError("time integral of the heat potential did not converge", err);
}

std::size_t hermite_nodes(std::size_t dim) {
    if (dim <= 1) return 48;
    if (dim == 2) return 24;
    if (dim == 3) return 12;
    return 6;
}

// Tensor Gauss–Hermite expectation E g(ξ), ξ ~ N(0, I_k).
double hermite_expectation(std::size_t k, const std::function<double(std::span<const double>)>& g) {
    if (k == 0) return g({});
    const GaussRule& rule = gauss_hermite(hermite_nodes(k));
    const std::size_t n = rule.nodes.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) total *= n;
    std::vector<double> xi(k);
    double sum = 0.0;
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t rem = p;
        double w = 1.0;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t idx = rem % n;
            rem /= n;
            xi[i] = rule.nodes[idx];
            w *= rule.weights[idx];
        }
        sum += w * g(xi);
    }
    return sum;
}

}  // namespace

double atom_time_integral(double q, std::size_t d, double det, double t) {
    if (d == 1) {
        const double sd = std::sqrt(det);
        return heat_kernel_time_integral_1d(std::sqrt(q) / sd, t) / sd;
    }
    if (q <= 0.0) return inf;
    const double x = q / (2.0 * t);
    if (x > 700.0) return 0.0;
    const double dd = static_cast<double>(d);
    const double two_pi = boost::math::constants::two_pi<double>();
    return std::pow(two_pi, -0.5 * dd) * std::pow(0.5 * q, 1.0 - 0.5 * dd) * upper_gamma(0.5 * dd - 1.0, x) /
           std::sqrt(det);
}

namespace {

double hyperplane_potential(const HyperplaneAtom& p, std::span<const double> x0, double t, const GaussianFrame& f) {
    const std::size_t d = f.dim;
    if (d == 1) {
        const std::vector<double> y = foot_point(p);
        const double q = f.quadratic(x0, y);
        return p.weight * p.profile_at(y) * atom_time_integral(q, 1, f.det, t);
    }
    // Y·n ~ N(x0·n, s v) with v = nᵀ b n; conditioned on Y·n = c the law of Y
    // is Gaussian with mean m and covariance s C.
    std::vector<double> bn(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) bn[i] += f.cov[i * d + j] * p.normal[j];
    const double v = dot(bn, p.normal);
    const double delta = dot(x0, p.normal) - p.offset;
    if (!p.profile) {
        const double sv = std::sqrt(v);
        return p.weight * heat_kernel_time_integral_1d(delta / sv, t) / sv;
    }
    std::vector<double> mean(d);
    for (std::size_t i = 0; i < d; ++i) mean[i] = x0[i] - bn[i] * delta / v;
    Eigen::MatrixXd c(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f.cov[i * d + j] - bn[i] * bn[j] / v;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    // Keep the d-1 nonzero directions scaled by their standard deviations.
    std::vector<std::vector<double>> axes;
    for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(d); ++k) {
        const double lam = std::max(0.0, es.eigenvalues()(k));
        std::vector<double> a(d);
        for (std::size_t i = 0; i < d; ++i)
            a[i] = std::sqrt(lam) * es.eigenvectors()(static_cast<Eigen::Index>(i), k);
        axes.push_back(std::move(a));
    }
    const double two_pi = boost::math::constants::two_pi<double>();
    std::vector<double> y(d);
    auto integrand = [&](double u) {
        if (u <= 0.0) return 0.0;
        const double s = u * u;
        const double normal_density = std::exp(-0.5 * delta * delta / (s * v)) / std::sqrt(two_pi * s * v);
        if (normal_density == 0.0) return 0.0;
        const double e = hermite_expectation(d - 1, [&](std::span<const double> xi) {
            for (std::size_t i = 0; i < d; ++i) {
                y[i] = mean[i];
                for (std::size_t k = 0; k + 1 < d; ++k) y[i] += u * axes[k][i] * xi[k];
            }
            return p.profile_at(y);
        });
        return 2.0 * u * normal_density * e;
    };
    return p.weight * doubling_gl(integrand, std::sqrt(t));
}

double density_potential(const DensityPart& part, std::span<const double> x0, double t, const GaussianFrame& f) {
    const std::size_t d = f.dim;
    std::vector<double> y(d);
    auto integrand = [&](double u) {
        return 2.0 * u * hermite_expectation(d, [&](std::span<const double> xi) {
                   for (std::size_t i = 0; i < d; ++i) {
                       y[i] = x0[i];
                       for (std::size_t j = 0; j <= i; ++j) y[i] += u * f.chol[i * d + j] * xi[j];
                   }
                   const double r = norm(y);
                   if (r < part.inner_radius || r > part.outer_radius) return 0.0;
                   return part.h(y);
               });
    };
    return doubling_gl(integrand, std::sqrt(t));
}

double kernel(std::size_t d, double r) noexcept {
    if (d == 1) return r;
    if (d == 2) return r > 0.0 ? std::log(1.0 / r) : inf;
    return r > 0.0 ? std::pow(r, 2.0 - static_cast<double>(d)) : inf;
}

// ∫ over {y on the plane, |x0 - y| <= ε} of K_d(|x0 - y|) dσ(y), δ = distance.
double plane_ball_kernel(std::size_t d, double delta, double eps) {
    if (delta >= eps) return 0.0;
    const double rho = std::sqrt(eps * eps - delta * delta);
    const double pi = boost::math::constants::pi<double>();
    if (d == 2) {
        const double at = delta > 0.0 ? 2.0 * delta * std::atan(rho / delta) : 0.0;
        return -(rho * std::log(eps * eps) - 2.0 * rho + at);
    }
    if (d == 3) return 2.0 * pi * (eps - delta);
    const double area = unit_sphere_area(d - 1);
    return area * integrate_gl(
                      [&](double s) {
                          const double r2 = delta * delta + s * s;
                          return std::pow(r2, 1.0 - 0.5 * static_cast<double>(d)) *
                                 std::pow(s, static_cast<double>(d) - 2.0);
                      },
                      0.0, rho, 16, 4);
}

// Directions and weights of an angular rule on S^{d-1} (weights sum to |S^{d-1}|).
struct SphereRule {
    std::vector<std::vector<double>> dirs;
    std::vector<double> weights;
};

SphereRule sphere_rule(std::size_t d) {
    SphereRule s;
    const double pi = boost::math::constants::pi<double>();
    if (d == 1) {
        s.dirs = {{1.0}, {-1.0}};
        s.weights = {1.0, 1.0};
    } else if (d == 2) {
        const std::size_t n = 64;
        for (std::size_t k = 0; k < n; ++k) {
            const double a = 2.0 * pi * (static_cast<double>(k) + 0.5) / n;
            s.dirs.push_back({std::cos(a), std::sin(a)});
            s.weights.push_back(2.0 * pi / n);
        }
    } else if (d == 3) {
        const GaussRule& g = gauss_legendre(16);
        const std::size_t nphi = 32;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const double ct = g.nodes[i], st = std::sqrt(1.0 - ct * ct);
            for (std::size_t k = 0; k < nphi; ++k) {
                const double phi = 2.0 * pi * (static_cast<double>(k) + 0.5) / nphi;
                s.dirs.push_back({st * std::cos(phi), st * std::sin(phi), ct});
                s.weights.push_back(g.weights[i] * 2.0 * pi / nphi);
            }
        }
    }
    return s;
}

double density_ball_kernel(const DensityPart& part, std::span<const double> x0, double eps) {
    const std::size_t d = x0.size();
    if (!shell_hits_ball(part, x0, eps)) return 0.0;
    if (d >= 4) return part.sup_abs * unit_sphere_area(d) * eps * eps / 2.0;
    static thread_local std::vector<SphereRule> rules(4);
    SphereRule& rule = rules[d];
    if (rule.dirs.empty()) rule = sphere_rule(d);
    const GaussRule& radial = gauss_legendre(32);
    std::vector<double> y(d);
    double total = 0.0;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
        const double r = 0.5 * eps * (radial.nodes[i] + 1.0);
        const double wr = 0.5 * eps * radial.weights[i] * kernel(d, r) * std::pow(r, static_cast<double>(d) - 1.0);
        double ang = 0.0;
        for (std::size_t k = 0; k < rule.dirs.size(); ++k) {
            for (std::size_t j = 0; j < d; ++j) y[j] = x0[j] + r * rule.dirs[k][j];
            const double ry = norm(y);
            if (ry < part.inner_radius || ry > part.outer_radius) continue;
            ang += rule.weights[k] * std::fabs(part.h(y));
        }
        total += wr * ang;
    }
    return total;
}

double unit_ball_mass_1d(const SpaceTimeMeasure& nu, double x) {
    double m = 0.0;
    for (const auto& a : nu.atoms())
        if (std::fabs(a.location[0] - x) <= 1.0) m += std::fabs(a.weight);
    for (const auto& p : nu.hyperplanes()) {
        const std::vector<double> y = foot_point(p);
        if (std::fabs(y[0] - x) <= 1.0) m += std::fabs(p.weight) * p.profile_at(y);
    }
    for (const auto& part : nu.densities()) {
        const double pt[1] = {x};
        if (!shell_hits_ball(part, pt, 1.0)) continue;
        m += integrate_gl(
            [&](double y) {
                const double v[1] = {y};
                const double r = std::fabs(y);
                if (r < part.inner_radius || r > part.outer_radius) return 0.0;
                return std::fabs(part.h(v));
            },
            x - 1.0, x + 1.0, 16, 16);
    }
    return m;
}

}  // namespace

// SpaceTimeMeasure -----------------------------------------------------------

SpaceTimeMeasure& SpaceTimeMeasure::add_atom(PointAtom atom) {
    if (atom.location.size() != dim_) throw ConfigError("atom location has the wrong dimension");
    if (!std::isfinite(atom.weight)) throw ConfigError("atom weight must be finite");
    atoms_.push_back(std::move(atom));
    return *this;
}

SpaceTimeMeasure& SpaceTimeMeasure::add_hyperplane(HyperplaneAtom plane) {
    if (plane.normal.size() != dim_) throw ConfigError("hyperplane normal has the wrong dimension");
    const double n = norm(plane.normal);
    if (!(n > 0.0)) throw ConfigError("hyperplane normal must be nonzero");
    if (!std::isfinite(plane.weight) || !std::isfinite(plane.offset)) throw ConfigError("hyperplane must be finite");
    for (double& v : plane.normal) v /= n;
    plane.offset /= n;
    planes_.push_back(std::move(plane));
    return *this;
}

SpaceTimeMeasure& SpaceTimeMeasure::add_density(DensityPart part) {
    if (!part.h) throw ConfigError("density part needs an evaluator");
    if (!std::isfinite(part.sup_abs)) throw ConfigError("density part must be bounded");
    densities_.push_back(std::move(part));
    return *this;
}

SpaceTimeMeasure SpaceTimeMeasure::positive_part() const {
    SpaceTimeMeasure out(dim_);
    for (const auto& a : atoms_)
        if (a.weight > 0.0) out.atoms_.push_back(a);
    for (const auto& p : planes_)
        if (p.weight > 0.0) out.planes_.push_back(p);
    for (const auto& d : densities_) {
        DensityPart q = d;
        q.id = d.id + "+";
        q.h = [h = d.h](std::span<const double> y) { return std::max(h(y), 0.0); };
        out.densities_.push_back(std::move(q));
    }
    return out;
}

SpaceTimeMeasure SpaceTimeMeasure::negative_part() const {
    SpaceTimeMeasure out(dim_);
    for (const auto& a : atoms_)
        if (a.weight < 0.0) out.atoms_.push_back(PointAtom{a.location, -a.weight});
    for (const auto& p : planes_)
        if (p.weight < 0.0) {
            HyperplaneAtom q = p;
            q.weight = -p.weight;
            out.planes_.push_back(std::move(q));
        }
    for (const auto& d : densities_) {
        DensityPart q = d;
        q.id = d.id + "-";
        q.h = [h = d.h](std::span<const double> y) { return std::max(-h(y), 0.0); };
        out.densities_.push_back(std::move(q));
    }
    return out;
}

SpaceTimeMeasure SpaceTimeMeasure::variation() const { return positive_part() + negative_part(); }

SpaceTimeMeasure SpaceTimeMeasure::scaled(double factor) const {
    SpaceTimeMeasure out(dim_);
    for (auto a : atoms_) {
        a.weight *= factor;
        out.atoms_.push_back(std::move(a));
    }
    for (auto p : planes_) {
        p.weight *= factor;
        out.planes_.push_back(std::move(p));
    }
    for (auto d : densities_) {
        d.h = [h = d.h, factor](std::span<const double> y) { return factor * h(y); };
        d.sup_abs *= std::fabs(factor);
        out.densities_.push_back(std::move(d));
    }
    return out;
}

SpaceTimeMeasure SpaceTimeMeasure::operator+(const SpaceTimeMeasure& other) const {
    if (other.dim_ != dim_) throw ConfigError("cannot add measures of different dimension");
    SpaceTimeMeasure out = *this;
    out.atoms_.insert(out.atoms_.end(), other.atoms_.begin(), other.atoms_.end());
    out.planes_.insert(out.planes_.end(), other.planes_.begin(), other.planes_.end());
    out.densities_.insert(out.densities_.end(), other.densities_.begin(), other.densities_.end());
    return out;
}

double SpaceTimeMeasure::box_mass(std::span<const double> lo, std::span<const double> hi) const {
    const std::size_t d = dim_;
    auto inside = [&](std::span<const double> y) {
        for (std::size_t k = 0; k < d; ++k)
            if (!(y[k] > lo[k] && y[k] <= hi[k])) return false;
        return true;
    };
    double total = 0.0;
    for (const auto& a : atoms_)
        if (inside(a.location)) total += a.weight;

    for (const auto& p : planes_) {
        if (d == 1) {
            const std::vector<double> y = foot_point(p);
            if (inside(y)) total += p.weight * p.profile_at(y);
            continue;
        }
        // Solve for the coordinate with the largest normal component.
        std::size_t kmax = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (std::fabs(p.normal[k]) > std::fabs(p.normal[kmax])) kmax = k;
        std::vector<double> plo, phi;
        for (std::size_t k = 0; k < d; ++k)
            if (k != kmax) {
                plo.push_back(lo[k]);
                phi.push_back(hi[k]);
            }
        const TensorRule rule = tensor_gauss(d - 1, 1.0, 64);
        std::vector<double> y(d);
        double s = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double w = rule.weights[q];
            double acc = p.offset;
            for (std::size_t k = 0, m = 0; k < d; ++k) {
                if (k == kmax) continue;
                const double half = 0.5 * (phi[m] - plo[m]);
                y[k] = plo[m] + half * (rule.points[q * (d - 1) + m] + 1.0);
                w *= half;
                acc -= p.normal[k] * y[k];
                ++m;
            }
            y[kmax] = acc / p.normal[kmax];
            if (y[kmax] > lo[kmax] && y[kmax] <= hi[kmax]) s += w * p.profile_at(y);
        }
        total += p.weight * s / std::fabs(p.normal[kmax]);
    }

    if (!densities_.empty()) {
        const std::size_t n = d == 1 ? 32 : (d == 2 ? 48 : 16);
        const std::size_t panels = d == 1 ? 16 : 1;
        const GaussRule& g = gauss_legendre(n);
        std::vector<double> y(d);
        std::size_t per_axis = n * panels, count = 1;
        for (std::size_t k = 0; k < d; ++k) count *= per_axis;
        for (const auto& part : densities_) {
            double s = 0.0;
            for (std::size_t q = 0; q < count; ++q) {
                std::size_t rem = q;
                double w = 1.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const std::size_t idx = rem % per_axis;
                    rem /= per_axis;
                    const std::size_t panel = idx / n, node = idx % n;
                    const double width = (hi[k] - lo[k]) / static_cast<double>(panels);
                    const double a = lo[k] + static_cast<double>(panel) * width;
                    y[k] = a + 0.5 * width * (g.nodes[node] + 1.0);
                    w *= 0.5 * width * g.weights[node];
                }
                const double r = norm(y);
                if (r < part.inner_radius || r > part.outer_radius) continue;
                s += w * part.h(y);
            }
            total += s;
        }
    }
    return total;
}

double SpaceTimeMeasure::density_at(std::span<const double> y) const {
    const double r = norm(y);
    double s = 0.0;
    for (const auto& part : densities_)
        if (r >= part.inner_radius && r <= part.outer_radius) s += part.h(y);
    return s;
}

double SpaceTimeMeasure::support_radius() const {
    double r = 0.0;
    for (const auto& a : atoms_) r = std::max(r, norm(a.location));
    for (const auto& p : planes_) {
        if (dim_ >= 2) return inf;
        r = std::max(r, std::fabs(p.offset));
    }
    for (const auto& d : densities_) r = std::max(r, d.outer_radius);
    return r;
}

DensityPart constant_ball_density(std::size_t dim, double value, double radius) {
    if (!(radius > 0.0) || !std::isfinite(value)) throw ConfigError("constant density: bad parameters");
    DensityPart p;
    p.id = "constant";
    p.h = [value, radius](std::span<const double> y) { return norm(y) <= radius ? value : 0.0; };
    p.sup_abs = std::fabs(value);
    p.inner_radius = 0.0;
    p.outer_radius = radius;
    (void)dim;
    return p;
}

DensityPart gaussian_density(std::vector<double> center, double amplitude, double width) {
    if (!(width > 0.0) || !std::isfinite(amplitude)) throw ConfigError("gaussian density: bad parameters");
    DensityPart p;
    p.id = "gaussian";
    p.sup_abs = std::fabs(amplitude);
    p.inner_radius = 0.0;
    // exp(-q/2) underflows to 0 beyond 40 widths.
    p.outer_radius = norm(center) + 40.0 * width;
    p.h = [center = std::move(center), amplitude, width](std::span<const double> y) {
        double q = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) q += (y[k] - center[k]) * (y[k] - center[k]);
        return amplitude * std::exp(-0.5 * q / (width * width));
    };
    return p;
}

DensityPart bump_density(std::vector<double> center, double amplitude, double radius) {
    if (!(radius > 0.0) || !std::isfinite(amplitude)) throw ConfigError("bump density: bad parameters");
    DensityPart p;
    p.id = "bump";
    p.sup_abs = std::fabs(amplitude);
    const double c = norm(center);
    p.inner_radius = std::max(0.0, c - radius);
    p.outer_radius = c + radius;
    p.h = [center = std::move(center), amplitude, radius](std::span<const double> y) {
        double q = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) q += (y[k] - center[k]) * (y[k] - center[k]);
        return amplitude * unit_bump(q / (radius * radius));
    };
    return p;
}

// Kato machinery --------------------------------------------------------------

double unit_sphere_area(std::size_t k) {
    const double h = 0.5 * static_cast<double>(k);
    return 2.0 * std::pow(boost::math::constants::pi<double>(), h) / boost::math::tgamma(h);
}

double heat_potential(const SpaceTimeMeasure& measure, std::span<const double> x0, double t,
                      const GaussianFrame& frame) {
    if (!(t > 0.0)) throw ConfigError("heat potential needs t > 0");
    if (x0.size() != measure.dim() || frame.dim != measure.dim()) throw ConfigError("dimension mismatch");
    double total = 0.0;
    for (const auto& a : measure.atoms()) {
        if (a.weight == 0.0) continue;
        total += a.weight * atom_time_integral(frame.quadratic(x0, a.location), frame.dim, frame.det, t);
    }
    for (const auto& p : measure.hyperplanes())
        if (p.weight != 0.0) total += hyperplane_potential(p, x0, t, frame);
    for (const auto& part : measure.densities()) total += density_potential(part, x0, t, frame);
    return total;
}

double kato_integral(const SpaceTimeMeasure& measure, double t0, std::span<const double> x0, double t) {
    if (!(t0 >= 0.0)) throw ConfigError("kato_integral needs t0 >= 0");
    const GaussianFrame frame = make_gaussian_frame({}, measure.dim());
    return heat_potential(measure.variation(), x0, t, frame);
}

double kato_ball_integral(const SpaceTimeMeasure& nu, std::span<const double> x0, double eps) {
    const std::size_t d = nu.dim();
    double total = 0.0;
    for (const auto& a : nu.atoms()) {
        std::vector<double> diff(d);
        for (std::size_t k = 0; k < d; ++k) diff[k] = a.location[k] - x0[k];
        const double r = norm(diff);
        if (r <= eps && a.weight != 0.0) total += std::fabs(a.weight) * kernel(d, r);
    }
    for (const auto& p : nu.hyperplanes()) {
        if (p.weight == 0.0) continue;
        if (d == 1) {
            const std::vector<double> y = foot_point(p);
            const double r = std::fabs(y[0] - x0[0]);
            if (r <= eps) total += std::fabs(p.weight) * p.profile_at(y) * kernel(1, r);
            continue;
        }
        const double delta = std::fabs(dot(x0, p.normal) - p.offset);
        total += std::fabs(p.weight) * p.profile_sup * plane_ball_kernel(d, delta, eps);
    }
    for (const auto& part : nu.densities()) total += density_ball_kernel(part, x0, eps);
    return total;
}

std::vector<std::vector<double>> kato_grid(const SpaceTimeMeasure& measure, std::size_t points) {
    const std::size_t d = measure.dim();
    double s = 0.0;
    for (const auto& a : measure.atoms()) s = std::max(s, norm(a.location));
    for (const auto& p : measure.hyperplanes()) s = std::max(s, std::fabs(p.offset));
    for (const auto& part : measure.densities())
        if (std::isfinite(part.outer_radius)) s = std::max(s, part.outer_radius);
    const double half = s + 1.0;
    auto per_axis = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(points), 1.0 / d) - 1e-9));
    per_axis = std::max<std::size_t>(per_axis, 2);
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) total *= per_axis;
    std::vector<std::vector<double>> grid;
    grid.reserve(total + measure.atoms().size() + measure.hyperplanes().size());
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t rem = p;
        std::vector<double> x(d);
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t idx = rem % per_axis;
            rem /= per_axis;
            x[k] = -half + 2.0 * half * static_cast<double>(idx) / static_cast<double>(per_axis - 1);
        }
        grid.push_back(std::move(x));
    }
    for (const auto& a : measure.atoms()) grid.push_back(a.location);
    for (const auto& p : measure.hyperplanes()) grid.push_back(foot_point(p));
    return grid;
}

KatoVerdict classify_kato(const SpaceTimeMeasure& measure, std::size_t grid_points) {
    const std::size_t d = measure.dim();
    const SpaceTimeMeasure nu = measure.variation();
    const std::vector<std::vector<double>> grid = kato_grid(measure, grid_points);

    KatoVerdict v;
    v.dim = d;
    if (d == 1) {
        for (const auto& x : grid) v.unit_ball_mass = std::max(v.unit_ball_mass, unit_ball_mass_1d(nu, x[0]));
    }

    std::size_t strikes = 0;
    bool stalled = false;
    std::vector<double> last_arg;
    for (std::size_t k = 0; k < kato_schedule_length; ++k) {
        const double eps = std::ldexp(1.0, -static_cast<int>(k));
        double best = 0.0;
        std::vector<double> arg = grid.front();
        for (const auto& x : grid) {
            const double val = kato_ball_integral(nu, x, eps);
            if (val > best) {
                best = val;
                arg = x;
            }
        }
        v.epsilons.push_back(eps);
        v.values.push_back(best);
        if (k > 0 && best > kato_threshold && best >= v.values[k - 1]) {
            ++strikes;
        } else {
            strikes = 0;
        }
        if (strikes >= kato_strike_limit) {
            stalled = true;
            v.witness_x0 = arg;
            v.witness_t = eps * eps;
            break;
        }
    }

    v.is_kato = !stalled && std::isfinite(v.unit_ball_mass);
    if (!v.is_kato) {
        if (v.witness_x0.empty()) {
            v.witness_x0 = grid.front();
            v.witness_t = 1.0;
        }
        v.witness_t0 = 0.0;
        v.witness_value = kato_integral(measure, 0.0, v.witness_x0, v.witness_t);
    }
    return v;
}

}  // namespace flowgrad
