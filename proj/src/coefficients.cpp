#include "flowgrad/coefficients.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "flowgrad/error.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/rng.hpp"

namespace flowgrad {

namespace {

double smooth_f(double u) noexcept { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }

double smoothstep(double u) noexcept {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    const double a = smooth_f(u), b = smooth_f(1.0 - u);
    return a / (a + b);
}

double smoothstep_derivative(double u) noexcept {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double a = smooth_f(u), b = smooth_f(1.0 - u);
    const double da = a / (u * u), db = b / ((1.0 - u) * (1.0 - u));
    const double s = a + b;
    return (da * b + a * db) / (s * s);
}

double max_smoothstep_slope() {
    static const double value = [] {
        double m = 0.0;
        for (int i = 1; i < 20000; ++i) m = std::max(m, smoothstep_derivative(i / 20000.0));
        return 1.001 * m;
    }();
    return value;
}

// max over r of |d/dr unit_bump(r²)|.
double max_bump_slope() {
    static const double value = [] {
        double m = 0.0;
        for (int i = 1; i < 20000; ++i) {
            const double r = i / 20000.0;
            m = std::max(m, std::fabs(unit_bump_derivative(r * r) * 2.0 * r));
        }
        return 1.001 * m;
    }();
    return value;
}

double norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw ConfigError(std::string(what) + ": parameters must be finite");
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

Cutoff Cutoff::for_radius(double radius) { return Cutoff{radius, std::min(1.0, 0.5 * radius)}; }

double Cutoff::value(double r) const noexcept {
    if (r <= radius - width) return 1.0;
    return smoothstep((radius - r) / width);
}

double Cutoff::derivative(double r) const noexcept {
    if (r <= radius - width || r >= radius) return 0.0;
    return -smoothstep_derivative((radius - r) / width) / width;
}

double unit_bump(double u2) noexcept { return u2 < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - u2)) : 0.0; }

double unit_bump_derivative(double u2) noexcept {
    if (u2 >= 1.0) return 0.0;
    const double q = 1.0 - u2;
    return -unit_bump(u2) / (q * q);
}

DriftSpec::DriftSpec(std::size_t dim, double bound_radius, DriftParams params)
    : dim_(dim), bound_radius_(bound_radius), cutoff_(Cutoff::for_radius(bound_radius)), params_(std::move(params)) {
    if (dim_ == 0) throw ConfigError("drift: dimension must be >= 1");
    if (!(bound_radius_ > 0.0) || !std::isfinite(bound_radius_)) throw ConfigError("drift: bound_R must be positive");
    const std::size_t d = dim_;
    std::visit(overloaded{
                   [&](drift::Zero&) { sup_norm_ = 0.0; },
                   [&](drift::Constant& p) {
                       if (p.value.size() != d) throw ConfigError("constant drift: value must have d entries");
                       require_finite(p.value, "constant drift");
                       sup_norm_ = norm(p.value);
                   },
                   [&](drift::Linear& p) {
                       if (p.alpha.size() != d * d) throw ConfigError("linear drift: alpha must be d x d");
                       require_finite(p.alpha, "linear drift");
                       sup_norm_ = norm(p.alpha) * bound_radius_;
                   },
                   [&](drift::Sign& p) {
                       if (d != 1) throw ConfigError("sign1d drift requires d = 1");
                       if (!std::isfinite(p.kappa)) throw ConfigError("sign1d drift: kappa must be finite");
                       sup_norm_ = std::fabs(p.kappa);
                   },
                   [&](drift::Hyperplane& p) {
                       if (p.normal.size() != d || p.jump.size() != d)
                           throw ConfigError("hyperplane drift: normal and jump must have d entries");
                       require_finite(p.normal, "hyperplane drift");
                       require_finite(p.jump, "hyperplane drift");
                       if (!std::isfinite(p.offset)) throw ConfigError("hyperplane drift: offset must be finite");
                       const double nn = norm(p.normal);
                       if (!(nn > 0.0)) throw ConfigError("hyperplane drift: normal must be nonzero");
                       for (double& v : p.normal) v /= nn;
                       p.offset /= nn;
                       sup_norm_ = 0.5 * norm(p.jump);
                   },
                   [&](drift::Bump& p) {
                       if (p.amplitude.size() != d || p.center.size() != d)
                           throw ConfigError("bump drift: amplitude and center must have d entries");
                       require_finite(p.amplitude, "bump drift");
                       require_finite(p.center, "bump drift");
                       if (!(p.radius > 0.0) || !std::isfinite(p.radius))
                           throw ConfigError("bump drift: radius must be positive");
                       if (norm(p.center) + p.radius > bound_radius_)
                           throw ConfigError("bump drift: support must lie inside bound_R");
                       sup_norm_ = norm(p.amplitude);
                   },
                   [&](drift::Mollified& p) {
                       if (!p.base || !p.kernel) throw ConfigError("mollified drift: missing base or kernel");
                       if (p.base->dim() != d || p.kernel->dim() != d)
                           throw ConfigError("mollified drift: dimension mismatch");
                       sup_norm_ = p.base->sup_norm();
                   },
               },
               params_);
}

std::string DriftSpec::id() const {
    return std::visit(overloaded{
                          [](const drift::Zero&) { return std::string("zero"); },
                          [](const drift::Constant&) { return std::string("constant"); },
                          [](const drift::Linear&) { return std::string("linear"); },
                          [](const drift::Sign&) { return std::string("sign1d"); },
                          [](const drift::Hyperplane&) { return std::string("hyperplane"); },
                          [](const drift::Bump&) { return std::string("bump"); },
                          [](const drift::Mollified&) { return std::string("mollified"); },
                      },
                      params_);
}

bool DriftSpec::is_smooth() const noexcept {
    return !std::holds_alternative<drift::Sign>(params_) && !std::holds_alternative<drift::Hyperplane>(params_);
}

double DriftSpec::value_1d(double t, double x) const {
    if (const auto* p = std::get_if<drift::Sign>(&params_)) {
        const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        return p->kappa * s * cutoff_.value(std::fabs(x));
    }
    if (std::holds_alternative<drift::Zero>(params_)) return 0.0;
    const double in[1] = {x};
    double out[1];
    value(t, in, out);
    return out[0];
}

void DriftSpec::value(double t, std::span<const double> x, std::span<double> out) const {
    const std::size_t d = dim_;
    std::visit(overloaded{
                   [&](const drift::Zero&) { std::fill(out.begin(), out.begin() + d, 0.0); },
                   [&](const drift::Constant& p) {
                       const double c = cutoff_.value(norm(x));
                       for (std::size_t i = 0; i < d; ++i) out[i] = p.value[i] * c;
                   },
                   [&](const drift::Linear& p) {
                       const double c = cutoff_.value(norm(x));
                       for (std::size_t i = 0; i < d; ++i) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < d; ++j) s += p.alpha[i * d + j] * x[j];
                           out[i] = s * c;
                       }
                   },
                   [&](const drift::Sign& p) {
                       const double s = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
                       out[0] = p.kappa * s * cutoff_.value(std::fabs(x[0]));
                   },
                   [&](const drift::Hyperplane& p) {
                       double proj = 0.0;
                       for (std::size_t j = 0; j < d; ++j) proj += p.normal[j] * x[j];
                       const double side = (proj > p.offset ? 1.0 : 0.0) - 0.5;
                       const double c = cutoff_.value(norm(x));
                       for (std::size_t i = 0; i < d; ++i) out[i] = p.jump[i] * side * c;
                   },
                   [&](const drift::Bump& p) {
                       double u2 = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                           const double z = (x[j] - p.center[j]) / p.radius;
                           u2 += z * z;
                       }
                       const double b = unit_bump(u2);
                       for (std::size_t i = 0; i < d; ++i) out[i] = p.amplitude[i] * b;
                   },
                   [&](const drift::Mollified& p) { mollified_value(p, t, x, out); },
               },
               params_);
}

void DriftSpec::gradient(double t, std::span<const double> x, std::span<double> out) const {
    const std::size_t d = dim_;
    if (!is_smooth()) throw ConfigError("drift '" + id() + "' is not smooth; use its derivative measure");
    std::visit(overloaded{
                   [&](const drift::Zero&) { std::fill(out.begin(), out.begin() + d * d, 0.0); },
                   [&](const drift::Constant& p) {
                       const double r = norm(x);
                       const double dc = cutoff_.derivative(r);
                       for (std::size_t i = 0; i < d; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                               out[i * d + j] = dc == 0.0 ? 0.0 : p.value[i] * dc * x[j] / r;
                   },
                   [&](const drift::Linear& p) {
                       const double r = norm(x);
                       const double c = cutoff_.value(r);
                       const double dc = cutoff_.derivative(r);
                       for (std::size_t i = 0; i < d; ++i) {
                           double ax = 0.0;
                           for (std::size_t j = 0; j < d; ++j) ax += p.alpha[i * d + j] * x[j];
                           for (std::size_t j = 0; j < d; ++j)
                               out[i * d + j] = p.alpha[i * d + j] * c + (dc == 0.0 ? 0.0 : ax * dc * x[j] / r);
                       }
                   },
                   [&](const drift::Bump& p) {
                       double u2 = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                           const double z = (x[j] - p.center[j]) / p.radius;
                           u2 += z * z;
                       }
                       const double db = unit_bump_derivative(u2);
                       for (std::size_t i = 0; i < d; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                               out[i * d + j] = p.amplitude[i] * db * 2.0 * (x[j] - p.center[j]) / (p.radius * p.radius);
                   },
                   [&](const drift::Mollified& p) { mollified_gradient(p, t, x, out); },
                   [&](const auto&) {},
               },
               params_);
}

MeasureMatrix DriftSpec::derivative_measure() const {
    const std::size_t d = dim_;
    MeasureMatrix m{d, std::vector<SpaceTimeMeasure>(d * d, SpaceTimeMeasure(d))};
    const Cutoff chi = cutoff_;
    const double slope = max_smoothstep_slope() / chi.width;

    if (is_smooth()) {
        if (std::holds_alternative<drift::Zero>(params_)) return m;
        auto self = std::make_shared<const DriftSpec>(*this);
        double inner = 0.0, outer = bound_radius_;
        std::vector<double> bound(d * d, 0.0);
        std::visit(overloaded{
                       [&](const drift::Constant& p) {
                           inner = chi.radius - chi.width;
                           for (std::size_t i = 0; i < d; ++i)
                               for (std::size_t j = 0; j < d; ++j) bound[i * d + j] = std::fabs(p.value[i]) * slope;
                       },
                       [&](const drift::Linear& p) {
                           for (std::size_t i = 0; i < d; ++i) {
                               const double row = norm(std::span<const double>(p.alpha).subspan(i * d, d));
                               for (std::size_t j = 0; j < d; ++j)
                                   bound[i * d + j] = std::fabs(p.alpha[i * d + j]) + row * bound_radius_ * slope;
                           }
                       },
                       [&](const drift::Bump& p) {
                           const double c = norm(p.center);
                           inner = std::max(0.0, c - p.radius);
                           outer = c + p.radius;
                           for (std::size_t i = 0; i < d; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                   bound[i * d + j] = std::fabs(p.amplitude[i]) * max_bump_slope() / p.radius;
                       },
                       [&](const drift::Mollified& p) {
                           const double h = p.kernel->radius();
                           if (p.base_measure) {
                               for (std::size_t e = 0; e < d * d; ++e) {
                                   const SpaceTimeMeasure& mu = p.base_measure->entries[e];
                                   double b = 0.0;
                                   const double peak = (*p.kernel)(std::vector<double>(d, 0.0));
                                   for (const auto& a : mu.atoms()) b += std::fabs(a.weight) * peak;
                                   for (const auto& pl : mu.hyperplanes())
                                       b += std::fabs(pl.weight) * pl.profile_sup * p.kernel->marginal(0.0);
                                   for (const auto& dp : mu.densities()) b += dp.sup_abs;
                                   bound[e] = b;
                               }
                           } else {
                               const MeasureMatrix base = p.base->derivative_measure();
                               for (std::size_t e = 0; e < d * d; ++e)
                                   for (const auto& dp : base.entries[e].densities()) bound[e] += dp.sup_abs;
                           }
                           outer = p.base->bound_radius() + h;
                       },
                       [&](const auto&) {},
                   },
                   params_);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                DensityPart part;
                part.id = id() + "-gradient";
                part.h = [self, i, j, d](std::span<const double> y) {
                    std::vector<double> g(d * d);
                    self->gradient(0.0, y, g);
                    return g[i * d + j];
                };
                part.sup_abs = bound[i * d + j];
                part.inner_radius = inner;
                part.outer_radius = outer;
                if (part.sup_abs > 0.0) m.at(i, j).add_density(std::move(part));
            }
        return m;
    }

    if (const auto* p = std::get_if<drift::Sign>(&params_)) {
        const double kappa = p->kappa;
        if (kappa == 0.0) return m;
        m.at(0, 0).add_atom(PointAtom{{0.0}, 2.0 * kappa});
        DensityPart part;
        part.id = "sign1d-cutoff";
        part.h = [chi, kappa](std::span<const double> y) { return kappa * chi.derivative(std::fabs(y[0])); };
        part.sup_abs = std::fabs(kappa) * slope;
        part.inner_radius = chi.radius - chi.width;
        part.outer_radius = chi.radius;
        m.at(0, 0).add_density(std::move(part));
        return m;
    }

    const auto& p = std::get<drift::Hyperplane>(params_);
    for (std::size_t i = 0; i < d; ++i) {
        if (p.jump[i] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            const double ji = p.jump[i];
            if (p.normal[j] != 0.0) {
                HyperplaneAtom atom;
                atom.normal = p.normal;
                atom.offset = p.offset;
                atom.weight = ji * p.normal[j];
                atom.profile = [chi](std::span<const double> y) { return chi.value(norm(y)); };
                atom.profile_sup = 1.0;
                m.at(i, j).add_hyperplane(std::move(atom));
            }
            DensityPart part;
            part.id = "hyperplane-cutoff";
            part.h = [chi, ji, j, normal = p.normal, offset = p.offset](std::span<const double> y) {
                const double r = norm(y);
                const double dc = chi.derivative(r);
                if (dc == 0.0) return 0.0;
                double proj = 0.0;
                for (std::size_t k = 0; k < y.size(); ++k) proj += normal[k] * y[k];
                const double side = (proj > offset ? 1.0 : 0.0) - 0.5;
                return ji * side * dc * y[j] / r;
            };
            part.sup_abs = 0.5 * std::fabs(ji) * slope;
            part.inner_radius = chi.radius - chi.width;
            part.outer_radius = chi.radius;
            m.at(i, j).add_density(std::move(part));
        }
    }
    return m;
}

std::vector<JumpSurface> DriftSpec::jump_surfaces() const {
    if (std::holds_alternative<drift::Sign>(params_)) return {JumpSurface{{1.0}, 0.0}};
    if (const auto* p = std::get_if<drift::Hyperplane>(&params_)) return {JumpSurface{p->normal, p->offset}};
    return {};
}

DiffusionSpec::DiffusionSpec(std::size_t dim, std::size_t noise_dim, DiffusionParams params)
    : dim_(dim), noise_dim_(noise_dim), params_(std::move(params)) {
    if (dim_ == 0 || noise_dim_ == 0) throw ConfigError("diffusion: d and m must be >= 1");
    std::visit(overloaded{
                   [&](const diffusion::Identity&) {
                       if (noise_dim_ != dim_) throw ConfigError("identity diffusion requires m = d");
                   },
                   [&](const diffusion::Constant& p) {
                       if (p.matrix.size() != dim_ * noise_dim_)
                           throw ConfigError("constant diffusion: matrix must be d x m");
                       require_finite(p.matrix, "constant diffusion");
                   },
                   [&](const diffusion::DiagonalBump& p) {
                       if (noise_dim_ != dim_) throw ConfigError("diagonal_bump diffusion requires m = d");
                       if (p.scale.size() != dim_ || p.center.size() != dim_)
                           throw ConfigError("diagonal_bump diffusion: scale and center must have d entries");
                       require_finite(p.scale, "diagonal_bump diffusion");
                       require_finite(p.center, "diagonal_bump diffusion");
                       for (double s : p.scale)
                           if (!(s > 0.0)) throw ConfigError("diagonal_bump diffusion: scale must be positive");
                       if (!(p.radius > 0.0) || !std::isfinite(p.radius))
                           throw ConfigError("diagonal_bump diffusion: radius must be positive");
                       if (!(1.0 + p.amplitude > 0.0) || !std::isfinite(p.amplitude))
                           throw ConfigError("diagonal_bump diffusion: 1 + amplitude must be positive");
                   },
               },
               params_);
}

std::string DiffusionSpec::id() const {
    return std::visit(overloaded{
                          [](const diffusion::Identity&) { return std::string("identity"); },
                          [](const diffusion::Constant&) { return std::string("constant"); },
                          [](const diffusion::DiagonalBump&) { return std::string("diagonal_bump"); },
                      },
                      params_);
}

bool DiffusionSpec::is_constant() const noexcept {
    if (const auto* p = std::get_if<diffusion::DiagonalBump>(&params_)) return p->amplitude == 0.0;
    return true;
}

bool DiffusionSpec::has_zero_gradient() const noexcept { return is_constant(); }

void DiffusionSpec::matrix(double, std::span<const double> x, std::span<double> out) const {
    const std::size_t d = dim_, m = noise_dim_;
    std::visit(overloaded{
                   [&](const diffusion::Identity&) {
                       std::fill(out.begin(), out.begin() + d * m, 0.0);
                       for (std::size_t i = 0; i < d; ++i) out[i * m + i] = 1.0;
                   },
                   [&](const diffusion::Constant& p) { std::copy(p.matrix.begin(), p.matrix.end(), out.begin()); },
                   [&](const diffusion::DiagonalBump& p) {
                       double u2 = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                           const double z = (x[j] - p.center[j]) / p.radius;
                           u2 += z * z;
                       }
                       const double f = 1.0 + p.amplitude * unit_bump(u2);
                       std::fill(out.begin(), out.begin() + d * m, 0.0);
                       for (std::size_t i = 0; i < d; ++i) out[i * m + i] = p.scale[i] * f;
                   },
               },
               params_);
}

void DiffusionSpec::gradient(double, std::span<const double> x, std::size_t k, std::span<double> out) const {
    const std::size_t d = dim_;
    std::fill(out.begin(), out.begin() + d * d, 0.0);
    const auto* p = std::get_if<diffusion::DiagonalBump>(&params_);
    if (!p || p->amplitude == 0.0) return;
    double u2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double z = (x[j] - p->center[j]) / p->radius;
        u2 += z * z;
    }
    const double db = unit_bump_derivative(u2);
    for (std::size_t j = 0; j < d; ++j)
        out[k * d + j] = p->scale[k] * p->amplitude * db * 2.0 * (x[j] - p->center[j]) / (p->radius * p->radius);
}

std::vector<double> DiffusionSpec::far_field() const {
    std::vector<double> out(dim_ * noise_dim_, 0.0);
    if (const auto* p = std::get_if<diffusion::Constant>(&params_)) return p->matrix;
    if (const auto* p = std::get_if<diffusion::DiagonalBump>(&params_)) {
        for (std::size_t i = 0; i < dim_; ++i) out[i * noise_dim_ + i] = p->scale[i];
        return out;
    }
    for (std::size_t i = 0; i < dim_; ++i) out[i * noise_dim_ + i] = 1.0;
    return out;
}

std::vector<double> DiffusionSpec::covariance(double t, std::span<const double> x) const {
    const std::size_t d = dim_, m = noise_dim_;
    std::vector<double> s(d * m);
    matrix(t, x, s);
    std::vector<double> b(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += s[i * m + k] * s[j * m + k];
            b[i * d + j] = acc;
        }
    return b;
}

double DiffusionSpec::ellipticity() const {
    if (const auto* p = std::get_if<diffusion::DiagonalBump>(&params_)) {
        const double lo = std::min(1.0, 1.0 + p->amplitude);
        double b = std::numeric_limits<double>::infinity();
        for (double s : p->scale) b = std::min(b, s * s * lo * lo);
        return b;
    }
    const std::vector<double> x(dim_, 0.0);
    return min_eigenvalue(covariance(0.0, x), dim_);
}

double DiffusionSpec::hoelder_constant() const {
    const auto* p = std::get_if<diffusion::DiagonalBump>(&params_);
    if (!p || p->amplitude == 0.0) return 0.0;
    double s = 0.0;
    for (double v : p->scale) s = std::max(s, v);
    return s * std::fabs(p->amplitude) * max_bump_slope() / p->radius;
}

double DiffusionSpec::max_covariance_eigenvalue() const {
    if (const auto* p = std::get_if<diffusion::DiagonalBump>(&params_)) {
        const double hi = std::max(1.0, 1.0 + p->amplitude);
        double b = 0.0;
        for (double s : p->scale) b = std::max(b, s * s * hi * hi);
        return b;
    }
    const std::vector<double> x(dim_, 0.0);
    const std::vector<double> b = covariance(0.0, x);
    Eigen::Map<const Eigen::MatrixXd> mat(b.data(), static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double DiffusionSpec::variable_radius() const noexcept {
    if (const auto* p = std::get_if<diffusion::DiagonalBump>(&params_)) {
        if (p->amplitude == 0.0) return 0.0;
        return norm(p->center) + p->radius;
    }
    return 0.0;
}

double min_eigenvalue(std::span<const double> sym, std::size_t d) {
    Eigen::Map<const Eigen::MatrixXd> mat(sym.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

CoefficientSet CoefficientSet::with_drift(std::shared_ptr<const DriftSpec> new_drift) const {
    CoefficientSet out = *this;
    if (!new_drift || new_drift->dim() != dim) throw ConfigError("with_drift: dimension mismatch");
    out.drift = std::move(new_drift);
    out.bound_radius = out.drift->bound_radius();
    return out;
}

CoefficientSet make_coefficients(std::shared_ptr<const DriftSpec> drift, std::shared_ptr<const DiffusionSpec> diffusion,
                                 double claimed_ellipticity, std::size_t n_samples) {
    if (!drift || !diffusion) throw ConfigError("coefficients: drift and diffusion are required");
    if (drift->dim() != diffusion->dim()) throw ConfigError("coefficients: drift and diffusion dimensions differ");
    if (!std::isfinite(drift->sup_norm())) throw ConfigError("coefficients: unbounded drift parameters");
    if (diffusion->variable_radius() > drift->bound_radius())
        throw ConfigError("coefficients: diffusion must be constant outside bound_R");

    CoefficientSet set;
    set.dim = drift->dim();
    set.noise_dim = diffusion->noise_dim();
    set.bound_radius = drift->bound_radius();

    const double exact = diffusion->ellipticity();
    if (!(exact > 1e-12)) throw ConfigError("coefficients: ellipticity check failed (sigma sigma* is singular)");
    if (claimed_ellipticity > 0.0) {
        const NormalStream stream(0x5eedULL, 0);
        const std::size_t d = set.dim;
        std::vector<double> x(d);
        for (std::size_t s = 0; s < n_samples; ++s) {
            for (std::size_t k = 0; k < d; ++k) x[k] = stream.at(s * d + k) * (set.bound_radius + 1.0) / 2.0;
            const std::vector<double> b = diffusion->covariance(0.0, x);
            if (min_eigenvalue(b, d) < claimed_ellipticity * (1.0 - 1e-12))
                throw ConfigError("coefficients: ellipticity check failed at a sampled point");
        }
        set.ellipticity = claimed_ellipticity;
    } else {
        set.ellipticity = exact;
    }
    set.drift = std::move(drift);
    set.diffusion = std::move(diffusion);
    return set;
}

}  // namespace flowgrad
