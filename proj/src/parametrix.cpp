#include "flowgrad/parametrix.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowgrad/error.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/parallel.hpp"
#include "flowgrad/quadrature.hpp"

namespace flowgrad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

constexpr double two_pi = 6.283185307179586476925286766559;

CMapMat time_slice(const DensityGrid& g, std::size_t ti) {
    const auto n = static_cast<Eigen::Index>(g.n_points());
    return CMapMat(g.values.data() + ti * g.n_points() * g.n_points(), n, n);
}

MapMat time_slice(DensityGrid& g, std::size_t ti) {
    const auto n = static_cast<Eigen::Index>(g.n_points());
    return MapMat(g.values.data() + ti * g.n_points() * g.n_points(), n, n);
}

std::vector<std::size_t> interior_rows(const Lattice& lat, double margin) {
    std::vector<std::size_t> out;
    std::vector<double> x(lat.dim);
    const double lim = lat.half_width - margin + 1e-9;
    for (std::size_t p = 0; p < lat.size(); ++p) {
        lat.point(p, x);
        bool inside = true;
        for (double c : x) inside = inside && std::fabs(c) <= lim;
        if (inside) out.push_back(p);
    }
    if (out.empty()) throw ConfigError("lattice has no interior rows for the requested margin");
    return out;
}

std::vector<double> uniform_times(double s0, double horizon, std::size_t n) {
    if (n == 0 || !(horizon > s0)) throw ConfigError("density: need n_times >= 1 and horizon > s0");
    std::vector<double> t(n);
    const double tau = (horizon - s0) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = s0 + static_cast<double>(k + 1) * tau;
    return t;
}

double time_step(const DensityGrid& g) {
    const std::size_t n = g.times.size();
    if (n == 0) throw ConfigError("density grid has no times");
    const double tau = g.times[0] - g.s0;
    for (std::size_t k = 0; k < n; ++k)
        if (std::fabs(g.times[k] - g.s0 - static_cast<double>(k + 1) * tau) > 1e-9 * (1.0 + std::fabs(g.times[k])))
            throw ConfigError("density grid times must be s0 + k tau");
    return tau;
}

// ∫_{r1}^{r2} ∇_z p(u, y - z) du and (1/τ)∫ u ∇_z p du for ζ = z - y with constant covariance frame.
void gradient_time_integrals(const GaussianFrame& f, std::span<const double> zeta, double r1, double r2, double tau,
                             std::span<double> m, std::span<double> nmom) {
    const std::size_t d = f.dim;
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) q += zeta[i] * f.inv[i * d + j] * zeta[j];
    if (q == 0.0) {
        std::fill(m.begin(), m.end(), 0.0);
        std::fill(nmom.begin(), nmom.end(), 0.0);
        return;
    }
    const double h = 0.5 * static_cast<double>(d);
    const double pre = std::pow(two_pi, -h) / std::sqrt(f.det) * std::pow(2.0 / q, h) * std::tgamma(h);
    const double p1 = r1 > 0.0 ? boost::math::gamma_p(h, q / (2.0 * r1)) : 1.0;
    const double p2 = boost::math::gamma_p(h, q / (2.0 * r2));
    const double i1 = pre * (p1 - p2);
    const double i0 = atom_time_integral(q, d, f.det, r2) - (r1 > 0.0 ? atom_time_integral(q, d, f.det, r1) : 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double bz = 0.0;
        for (std::size_t j = 0; j < d; ++j) bz += f.inv[i * d + j] * zeta[j];
        m[i] = -bz * i1;
        nmom[i] = -bz * i0 / tau;
    }
}

// Cell average of the drift over [z - δx/2, z + δx/2]^d with a tensor Gauss–Legendre rule.
std::vector<double> cell_averaged_drift(const DriftSpec& drift, const Lattice& lat, double t) {
    const std::size_t d = lat.dim, n = lat.size();
    const GaussRule& gl = gauss_legendre(8);
    const std::size_t q = gl.nodes.size();
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) total *= q;
    std::vector<double> out(n * d, 0.0), x(d), y(d), a(d);
    for (std::size_t p = 0; p < n; ++p) {
        lat.point(p, x);
        for (std::size_t s = 0; s < total; ++s) {
            std::size_t rem = s;
            double w = 1.0;
            for (std::size_t k = 0; k < d; ++k) {
                const std::size_t idx = rem % q;
                rem /= q;
                y[k] = x[k] + 0.5 * lat.spacing * gl.nodes[idx];
                w *= 0.5 * gl.weights[idx];
            }
            drift.value(t, y, a);
            for (std::size_t c = 0; c < d; ++c) out[p * d + c] += w * a[c];
        }
    }
    return out;
}

// Multi-index neighbour along axis c (or npos at the boundary).
std::size_t neighbour(const Lattice& lat, std::size_t p, std::size_t axis, int step) {
    std::size_t stride = 1;
    for (std::size_t k = axis + 1; k < lat.dim; ++k) stride *= lat.per_axis;
    const std::size_t idx = (p / stride) % lat.per_axis;
    if (step < 0 && idx == 0) return std::numeric_limits<std::size_t>::max();
    if (step > 0 && idx + 1 == lat.per_axis) return std::numeric_limits<std::size_t>::max();
    return step < 0 ? p - stride : p + stride;
}

// ∂/∂x_axis of G(s0, x, t, y) over the first spatial argument, central where possible.
Mat x_derivative(const DensityGrid& g, std::size_t ti, std::size_t axis) {
    const Lattice& lat = g.lattice;
    const std::size_t n = lat.size();
    const CMapMat s = time_slice(g, ti);
    Mat out(n, n);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t lo = neighbour(lat, p, axis, -1), hi = neighbour(lat, p, axis, +1);
        const auto r = static_cast<Eigen::Index>(p);
        if (lo != std::numeric_limits<std::size_t>::max() && hi != std::numeric_limits<std::size_t>::max())
            out.row(r) = (s.row(static_cast<Eigen::Index>(hi)) - s.row(static_cast<Eigen::Index>(lo))) / (2.0 * lat.spacing);
        else if (hi != std::numeric_limits<std::size_t>::max())
            out.row(r) = (s.row(static_cast<Eigen::Index>(hi)) - s.row(r)) / lat.spacing;
        else
            out.row(r) = (s.row(r) - s.row(static_cast<Eigen::Index>(lo))) / lat.spacing;
    }
    return out;
}

double clip_and_normalize(DensityGrid& g, bool normalize) {
    const std::size_t n = g.n_points();
    const double vol = g.lattice.cell_volume();
    double worst = 0.0;
    for (std::size_t ti = 0; ti < g.times.size(); ++ti)
        for (std::size_t xi = 0; xi < n; ++xi) {
            std::span<double> row = g.row(ti, xi);
            double neg = 0.0, mass = 0.0;
            for (double& v : row) {
                if (v < 0.0) {
                    neg -= v;
                    v = 0.0;
                }
                mass += v;
            }
            worst = std::max(worst, neg * vol);
            if (normalize && mass > 0.0)
                for (double& v : row) v /= mass * vol;
        }
    return worst;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// Lattice and DensityGrid ----------------------------------------------------

Lattice Lattice::make(std::size_t dim, double half_width, double spacing) {
    if (dim == 0 || dim > 2) throw ConfigError("density lattices support d in {1, 2}");
    if (!(half_width > 0.0) || !(spacing > 0.0)) throw ConfigError("lattice: half width and spacing must be positive");
    const double cells = 2.0 * half_width / spacing;
    const double rounded = std::round(cells);
    if (std::fabs(cells - rounded) > 1e-9 * cells || rounded < 2.0)
        throw ConfigError("lattice: 2L/dx must be an integer >= 2");
    return Lattice{dim, half_width, spacing, static_cast<std::size_t>(rounded) + 1};
}

std::size_t Lattice::size() const noexcept {
    std::size_t n = 1;
    for (std::size_t k = 0; k < dim; ++k) n *= per_axis;
    return n;
}

void Lattice::point(std::size_t p, std::span<double> out) const noexcept {
    for (std::size_t k = dim; k-- > 0;) {
        out[k] = coord(p % per_axis);
        p /= per_axis;
    }
}

std::vector<double> Lattice::point(std::size_t p) const {
    std::vector<double> x(dim);
    point(p, x);
    return x;
}

double Lattice::cell_volume() const noexcept { return std::pow(spacing, static_cast<double>(dim)); }

std::size_t Lattice::nearest(std::span<const double> x) const noexcept {
    std::size_t p = 0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double pos = std::round((x[k] + half_width) / spacing);
        if (pos < 0.0 || pos > static_cast<double>(per_axis - 1)) return size();
        p = p * per_axis + static_cast<std::size_t>(pos);
    }
    return p;
}

double DensityGrid::mass(std::size_t ti, std::size_t xi) const noexcept {
    double s = 0.0;
    for (double v : row(ti, xi)) s += v;
    return s * lattice.cell_volume();
}

// Zero-drift kernel ----------------------------------------------------------

DensityGrid zero_drift_density(const DiffusionSpec& diffusion, const DensityParams& params) {
    const std::size_t d = diffusion.dim();
    DensityGrid g;
    g.s0 = params.s0;
    g.lattice = Lattice::make(d, params.half_width, params.spacing);
    g.times = uniform_times(params.s0, params.horizon, params.n_times);
    g.tolerance = params.tolerance;
    const Lattice& lat = g.lattice;
    const std::size_t n = lat.size(), nt = g.times.size();
    g.values.assign(nt * n * n, 0.0);

    std::vector<std::vector<double>> pts(n);
    for (std::size_t p = 0; p < n; ++p) pts[p] = lat.point(p);

    if (diffusion.is_constant()) {
        const std::vector<double> zero(d, 0.0);
        const GaussianFrame frame = make_gaussian_frame(diffusion.covariance(0.0, zero), d);
        parallel_for(
            nt * n,
            [&](std::size_t r) {
                const std::size_t ti = r / n, xi = r % n;
                std::span<double> row = g.row(ti, xi);
                const double el = g.times[ti] - g.s0;
                for (std::size_t yi = 0; yi < n; ++yi) row[yi] = gaussian_kernel(frame, el, pts[xi], pts[yi]);
            },
            params.threads);
        g.notes.push_back("zero-drift kernel: exact Gaussian (constant diffusion)");
        return g;
    }

    // Frozen-at-y kernel Z and the first parametrix correction Z ⊗ Φ.
    std::vector<GaussianFrame> frames(n);
    std::vector<std::vector<double>> bvals(n);
    for (std::size_t p = 0; p < n; ++p) {
        bvals[p] = diffusion.covariance(0.0, pts[p]);
        frames[p] = make_gaussian_frame(bvals[p], d);
    }
    const double vol = lat.cell_volume();
    auto frozen = [&](double el, std::size_t xi, std::size_t yi) { return gaussian_kernel(frames[yi], el, pts[xi], pts[yi]); };
    auto frozen_matrix = [&](double el, bool normalize_rows) {
        Mat z(n, n);
        for (std::size_t xi = 0; xi < n; ++xi) {
            for (std::size_t yi = 0; yi < n; ++yi) z(xi, yi) = frozen(el, xi, yi);
            if (normalize_rows) {
                const double m = z.row(xi).sum() * vol;
                if (m > 0.0) z.row(xi) /= m;
            }
        }
        return z;
    };
    // Φ(z, y) = ½ Σ (b_ij(z) - b_ij(y)) ∂²_{z_i z_j} Z(r, z, t, y).
    auto phi_matrix = [&](double el) {
        Mat phi(n, n);
        std::vector<double> w(d), bw(d);
        for (std::size_t zi = 0; zi < n; ++zi)
            for (std::size_t yi = 0; yi < n; ++yi) {
                const GaussianFrame& f = frames[yi];
                for (std::size_t k = 0; k < d; ++k) w[k] = pts[yi][k] - pts[zi][k];
                for (std::size_t i = 0; i < d; ++i) {
                    bw[i] = 0.0;
                    for (std::size_t j = 0; j < d; ++j) bw[i] += f.inv[i * d + j] * w[j] / el;
                }
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double hess = bw[i] * bw[j] - f.inv[i * d + j] / el;
                        s += 0.5 * (bvals[zi][i * d + j] - bvals[yi][i * d + j]) * hess;
                    }
                phi(zi, yi) = s * gaussian_kernel(f, el, pts[zi], pts[yi]);
            }
        return phi;
    };
    const GaussRule& gl = gauss_legendre(16);
    for (std::size_t ti = 0; ti < nt; ++ti) {
        const double el = g.times[ti] - g.s0;
        Mat out = frozen_matrix(el, false);
        const double half_pi = 0.5 * 3.14159265358979323846;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
            const double theta = half_pi * (gl.nodes[q] + 1.0);
            const double r = 0.5 * el * (1.0 - std::cos(theta));
            const double wr = half_pi * gl.weights[q] * 0.5 * el * std::sin(theta);
            if (r <= 0.0 || r >= el) continue;
            out.noalias() += (wr * vol) * (frozen_matrix(r, true) * phi_matrix(el - r));
        }
        time_slice(g, ti) = out;
    }
    const double clipped = clip_and_normalize(g, true);
    g.notes.push_back("zero-drift kernel: frozen-coefficient parametrix surrogate with one correction layer, "
                      "rows renormalized; clipped negative mass " + fmt(clipped));
    return g;
}

// Perturbation ---------------------------------------------------------------

PerturbationResult perturbed_density(const DensityGrid& g, const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     std::size_t iterations, std::size_t threads) {
    const Lattice& lat = g.lattice;
    const std::size_t d = lat.dim, n = lat.size(), nt = g.times.size();
    if (drift.dim() != d || diffusion.dim() != d) throw ConfigError("perturbed_density: dimension mismatch");
    if (g.values.size() != nt * n * n) throw ConfigError("perturbed_density: malformed density grid");
    if (iterations == 0) throw ConfigError("perturbed_density: need at least one iteration");
    const double tau = time_step(g);
    const double vol = lat.cell_volume();

    PerturbationResult res{g, {}, 0.0};
    const std::vector<double> drift_cells = cell_averaged_drift(drift, lat, g.s0);
    bool zero_drift = true;
    for (double v : drift_cells) zero_drift = zero_drift && v == 0.0;
    if (zero_drift) {
        res.residuals.assign(iterations + 1, 0.0);
        res.density.notes.push_back("perturbation: zero drift, G = g");
        return res;
    }

    std::vector<std::vector<double>> pts(n);
    for (std::size_t p = 0; p < n; ++p) pts[p] = lat.point(p);

    // P_m, Q_m per component: kernels in (z, y) for lag segments m = 1..nt.
    std::vector<std::vector<Mat>> pk(nt + 1, std::vector<Mat>(d)), qk(nt + 1, std::vector<Mat>(d));
    const bool constant = diffusion.is_constant();
    std::vector<GaussianFrame> local(constant ? 1 : n);
    if (constant) {
        const std::vector<double> zero(d, 0.0);
        local[0] = make_gaussian_frame(diffusion.covariance(0.0, zero), d);
    } else {
        for (std::size_t p = 0; p < n; ++p) local[p] = make_gaussian_frame(diffusion.covariance(0.0, pts[p]), d);
    }
    std::vector<std::vector<Mat>> grad_g;  // [lag index][axis], lag index k ↔ (k+1)τ
    if (!constant) {
        grad_g.resize(nt);
        for (std::size_t k = 0; k < nt; ++k)
            for (std::size_t c = 0; c < d; ++c) grad_g[k].push_back(x_derivative(g, k, c));
    }
    for (std::size_t m = 1; m <= nt; ++m) {
        for (std::size_t c = 0; c < d; ++c) {
            pk[m][c].resize(n, n);
            qk[m][c].resize(n, n);
        }
        const double md = static_cast<double>(m);
        if (constant || m == 1) {
            parallel_for(
                n,
                [&](std::size_t zi) {
                    std::vector<double> zeta(d), mv(d), nv(d);
                    const GaussianFrame& f = local[constant ? 0 : zi];
                    for (std::size_t yi = 0; yi < n; ++yi) {
                        for (std::size_t k = 0; k < d; ++k) zeta[k] = pts[zi][k] - pts[yi][k];
                        gradient_time_integrals(f, zeta, (md - 1.0) * tau, md * tau, tau, mv, nv);
                        for (std::size_t c = 0; c < d; ++c) {
                            pk[m][c](zi, yi) = (1.0 - md) * mv[c] + nv[c];
                            qk[m][c](zi, yi) = md * mv[c] - nv[c];
                        }
                    }
                },
                threads);
        } else {
            for (std::size_t c = 0; c < d; ++c) {
                const Mat& lo = grad_g[m - 2][c];
                const Mat& hi = grad_g[m - 1][c];
                const Mat mm = 0.5 * tau * (lo + hi);
                const Mat nn = 0.5 * tau * ((md - 1.0) * lo + md * hi);
                pk[m][c] = (1.0 - md) * mm + nn;
                qk[m][c] = md * mm - nn;
            }
        }
    }
    // W_0 = Q_1, W_m = P_m + Q_{m+1}; scaled by δx^d for the z-sum.
    std::vector<std::vector<Mat>> wk(nt, std::vector<Mat>(d));
    for (std::size_t c = 0; c < d; ++c) {
        wk[0][c] = vol * qk[1][c];
        for (std::size_t m = 1; m < nt; ++m) wk[m][c] = vol * (pk[m][c] + qk[m + 1][c]);
    }
    // Source: g_i + a(x)·P_i(x, y) from the delta at time s0.
    std::vector<Mat> source(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        source[i] = time_slice(g, i);
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t xi = 0; xi < n; ++xi)
                source[i].row(static_cast<Eigen::Index>(xi)) +=
                    drift_cells[xi * d + c] * pk[i + 1][c].row(static_cast<Eigen::Index>(xi));
    }
    qk.clear();
    pk.clear();
    grad_g.clear();

    std::vector<Mat> cur(nt), next(nt), hd(nt * d);
    for (std::size_t i = 0; i < nt; ++i) cur[i] = time_slice(g, i);
    std::vector<Eigen::VectorXd> dcol(d, Eigen::VectorXd(n));
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t p = 0; p < n; ++p) dcol[c](static_cast<Eigen::Index>(p)) = drift_cells[p * d + c];

    for (std::size_t sweep = 0; sweep <= iterations; ++sweep) {
        for (std::size_t j = 0; j < nt; ++j)
            for (std::size_t c = 0; c < d; ++c) hd[j * d + c] = cur[j] * dcol[c].asDiagonal();
        parallel_for(
            nt,
            [&](std::size_t i) {
                Mat acc = source[i];
                for (std::size_t j = 0; j <= i; ++j)
                    for (std::size_t c = 0; c < d; ++c) acc.noalias() += hd[j * d + c] * wk[i - j][c];
                next[i] = std::move(acc);
            },
            threads);
        double r = 0.0;
        for (std::size_t i = 0; i < nt; ++i) r = std::max(r, (next[i] - cur[i]).cwiseAbs().maxCoeff());
        if (!std::isfinite(r)) throw NumericError("perturbation: non-finite residual at sweep " + std::to_string(sweep));
        if (!res.residuals.empty() && r > res.residuals.back() * (1.0 + 1e-9) && r > 1e-13) {
            std::ostringstream msg;
            msg << "perturbation: residual increased at sweep " << sweep << " (history:";
            for (double v : res.residuals) msg << ' ' << v;
            msg << ' ' << r << ")";
            throw NumericError(msg.str());
        }
        res.residuals.push_back(r);
        if (sweep < iterations) std::swap(cur, next);
    }
    for (std::size_t i = 0; i < nt; ++i) time_slice(res.density, i) = cur[i];
    res.clipped_mass = clip_and_normalize(res.density, false);
    res.density.notes.push_back("perturbation: " + std::to_string(iterations) + " sweeps, residual " +
                                fmt(res.residuals.back()) + ", clipped negative mass " + fmt(res.clipped_mass));
    return res;
}

// Reports and checks ---------------------------------------------------------

std::vector<ConvergenceRow> density_convergence_report(const std::vector<DensityGrid>& densities,
                                                       const std::vector<int>& levels, const DensityGrid& reference,
                                                       double delta, double interior_margin) {
    if (densities.size() != levels.size()) throw ConfigError("convergence report: one level per density");
    if (!(delta >= 0.0)) throw ConfigError("convergence report: delta must be >= 0");
    const Lattice& lat = reference.lattice;
    const std::size_t n = lat.size();
    const std::vector<std::size_t> rows = interior_rows(lat, interior_margin);
    std::vector<std::vector<double>> pts(n);
    for (std::size_t p = 0; p < n; ++p) pts[p] = lat.point(p);
    std::vector<ConvergenceRow> out;
    for (std::size_t k = 0; k < densities.size(); ++k) {
        const DensityGrid& gk = densities[k];
        if (gk.values.size() != reference.values.size() || gk.times != reference.times)
            throw ConfigError("convergence report: densities must share lattice and times");
        ConvergenceRow row{levels[k], 0.0, 0.0};
        for (std::size_t ti = 0; ti < reference.times.size(); ++ti) {
            const double el = reference.times[ti] - reference.s0;
            for (std::size_t xi : rows)
                for (std::size_t yi = 0; yi < n; ++yi) {
                    const double diff = std::fabs(gk.at(ti, xi, yi) - reference.at(ti, xi, yi));
                    double dist = 0.0;
                    for (std::size_t c = 0; c < lat.dim; ++c) dist += (pts[xi][c] - pts[yi][c]) * (pts[xi][c] - pts[yi][c]);
                    row.sup_all = std::max(row.sup_all, diff);
                    if (el + std::sqrt(dist) >= delta) row.sup_restricted = std::max(row.sup_restricted, diff);
                }
        }
        out.push_back(row);
    }
    return out;
}

double normalization_error(const DensityGrid& g, double interior_margin) {
    double worst = 0.0;
    for (std::size_t xi : interior_rows(g.lattice, interior_margin))
        for (std::size_t ti = 0; ti < g.times.size(); ++ti) worst = std::max(worst, std::fabs(g.mass(ti, xi) - 1.0));
    return worst;
}

double chapman_kolmogorov_deviation(const DensityGrid& g, std::size_t a, std::size_t b, double interior_margin) {
    const std::size_t nt = g.times.size();
    if (a >= nt || b >= nt) throw ConfigError("chapman-kolmogorov: time index out of range");
    const double target = g.times[a] + g.times[b] - 2.0 * g.s0;
    std::size_t c = nt;
    for (std::size_t k = 0; k < nt; ++k)
        if (std::fabs(g.times[k] - g.s0 - target) < 1e-9) c = k;
    if (c == nt) throw ConfigError("chapman-kolmogorov: t_a + t_b is not a grid time");
    const std::vector<std::size_t> rows = interior_rows(g.lattice, interior_margin);
    const CMapMat ga = time_slice(g, a), gb = time_slice(g, b), gc = time_slice(g, c);
    double worst = 0.0;
    for (std::size_t xi : rows) {
        const Eigen::RowVectorXd comp = g.lattice.cell_volume() * (ga.row(static_cast<Eigen::Index>(xi)) * gb);
        for (std::size_t yi : rows)
            worst = std::max(worst, std::fabs(comp(static_cast<Eigen::Index>(yi)) -
                                              gc(static_cast<Eigen::Index>(xi), static_cast<Eigen::Index>(yi))));
    }
    return worst;
}

EnvelopeFit fit_envelopes(const DensityGrid& g, double b_min, double b_max, double interior_margin) {
    if (!(b_min > 0.0) || !(b_max >= b_min)) throw ConfigError("envelope fit: need 0 < b_min <= b_max");
    const Lattice& lat = g.lattice;
    const std::size_t d = lat.dim, n = lat.size();
    const double dd = static_cast<double>(d);
    EnvelopeFit fit;
    fit.c_upper = 1.0 / (4.0 * b_max);
    fit.c_lower = 1.0 / b_min;
    fit.c_gradient = fit.c_upper;
    fit.C_lower = std::numeric_limits<double>::infinity();
    // Beyond 7 standard deviations the tabulated values are roundoff.
    const double window = 49.0;
    const std::vector<std::size_t> rows = interior_rows(lat, interior_margin);
    std::vector<std::vector<double>> pts(n);
    for (std::size_t p = 0; p < n; ++p) pts[p] = lat.point(p);
    for (std::size_t ti = 0; ti < g.times.size(); ++ti) {
        const double el = g.times[ti] - g.s0;
        std::vector<Mat> grads;
        for (std::size_t c = 0; c < d; ++c) grads.push_back(x_derivative(g, ti, c));
        for (std::size_t xi : rows)
            for (std::size_t yi = 0; yi < n; ++yi) {
                double r2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) r2 += (pts[xi][c] - pts[yi][c]) * (pts[xi][c] - pts[yi][c]);
                if (r2 > window * b_max * el) continue;
                const double v = g.at(ti, xi, yi);
                fit.C_upper = std::max(fit.C_upper, v * std::pow(el, 0.5 * dd) * std::exp(fit.c_upper * r2 / el));
                if (r2 <= 4.0 + 1e-12)
                    fit.C_lower = std::min(fit.C_lower, v * std::pow(el, 0.5 * dd) * std::exp(fit.c_lower * r2 / el));
                double gn = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double gv = grads[c](static_cast<Eigen::Index>(xi), static_cast<Eigen::Index>(yi));
                    gn += gv * gv;
                }
                fit.C_gradient = std::max(fit.C_gradient, std::sqrt(gn) * std::pow(el, 0.5 * (dd + 1.0)) *
                                                              std::exp(fit.c_gradient * r2 / el));
            }
    }
    fit.flagged = !(fit.C_lower > 0.0) || !std::isfinite(fit.C_upper) || !std::isfinite(fit.C_gradient);
    return fit;
}

double interpolated_mass(const DensityGrid& g, std::size_t ti, std::size_t xi, double lo, double hi) {
    const Lattice& lat = g.lattice;
    if (lat.dim != 1) throw ConfigError("interpolated mass is defined for d = 1");
    const std::span<const double> row = g.row(ti, xi);
    const double a = std::max(lo, -lat.half_width), b = std::min(hi, lat.half_width);
    if (!(b > a)) return 0.0;
    auto value_at = [&](double x) {
        const double pos = std::clamp((x + lat.half_width) / lat.spacing, 0.0, static_cast<double>(lat.per_axis - 1));
        const std::size_t k = std::min(static_cast<std::size_t>(pos), lat.per_axis - 2);
        const double f = pos - static_cast<double>(k);
        return row[k] * (1.0 - f) + row[k + 1] * f;
    };
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((a + lat.half_width) / lat.spacing)));
    double s = 0.0, left = a;
    for (std::size_t k = first + 1; k < lat.per_axis && left < b; ++k) {
        const double right = std::min(b, lat.coord(k));
        if (right > left) s += 0.5 * (right - left) * (value_at(left) + value_at(right));
        left = std::max(left, right);
    }
    return s;
}

std::vector<double> bin_masses(const DensityGrid& g, std::size_t ti, std::size_t xi, double lo, double hi,
                               std::size_t bins) {
    if (bins == 0 || !(hi > lo)) throw ConfigError("bin masses: need bins >= 1 and hi > lo");
    std::vector<double> out(bins);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b)
        out[b] = interpolated_mass(g, ti, xi, lo + static_cast<double>(b) * w, lo + static_cast<double>(b + 1) * w);
    return out;
}

// Serialization --------------------------------------------------------------

void write_density(const DensityGrid& g, const std::string& stem) {
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw ConfigError("cannot open " + stem + ".bin for writing");
    for (double v : g.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char bytes[8];
        for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
        bin.write(reinterpret_cast<const char*>(bytes), 8);
    }
    std::ofstream idx(stem + "_index.csv");
    if (!idx) throw ConfigError("cannot open " + stem + "_index.csv for writing");
    const Lattice& lat = g.lattice;
    const std::size_t n = lat.size();
    idx << "ti,s0,t,xi";
    for (std::size_t c = 0; c < lat.dim; ++c) idx << ",x_" << c + 1;
    idx << ",spacing,half_width,byte_offset,count\n";
    std::vector<double> x(lat.dim);
    for (std::size_t ti = 0; ti < g.times.size(); ++ti)
        for (std::size_t xi = 0; xi < n; ++xi) {
            lat.point(xi, x);
            idx << ti << ',' << fmt(g.s0) << ',' << fmt(g.times[ti]) << ',' << xi;
            for (double c : x) idx << ',' << fmt(c);
            idx << ',' << fmt(lat.spacing) << ',' << fmt(lat.half_width) << ',' << (ti * n + xi) * n * 8 << ',' << n
                << '\n';
        }
}

DensityGrid read_density(const std::string& stem) {
    std::ifstream idx(stem + "_index.csv");
    if (!idx) throw ConfigError("cannot open " + stem + "_index.csv");
    std::string line;
    std::getline(idx, line);
    std::size_t commas = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    const std::size_t dim = commas + 1 - 8;
    DensityGrid g;
    double spacing = 0.0, half = 0.0;
    std::size_t rows = 0;
    while (std::getline(idx, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 8 + dim) throw ConfigError("density index: malformed line");
        const std::size_t ti = std::stoul(f[0]);
        g.s0 = std::stod(f[1]);
        if (ti == g.times.size()) g.times.push_back(std::stod(f[2]));
        spacing = std::stod(f[4 + dim]);
        half = std::stod(f[5 + dim]);
        ++rows;
    }
    g.lattice = Lattice::make(dim, half, spacing);
    const std::size_t n = g.lattice.size();
    if (rows != g.times.size() * n) throw ConfigError("density index: row count does not match the lattice");
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw ConfigError("cannot open " + stem + ".bin");
    g.values.resize(rows * n);
    for (double& v : g.values) {
        unsigned char bytes[8];
        if (!bin.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigError("density file is truncated");
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
        std::memcpy(&v, &bits, sizeof v);
    }
    return g;
}

}  // namespace flowgrad
