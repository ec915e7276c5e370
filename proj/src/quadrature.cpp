#include "flowgrad/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "flowgrad/error.hpp"

namespace flowgrad {

namespace {

// Legendre P_n(x) and P_{n-1}(x) by the three-term recurrence.
std::pair<double, double> legendre(std::size_t n, double x) {
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
    }
    return {p1, p0};
}

GaussRule build_gauss_legendre(std::size_t n) {
    GaussRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    if (n == 1) {
        rule.weights[0] = 2.0;
        return rule;
    }
    const double pi = boost::math::constants::pi<double>();
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [pn, pm] = legendre(n, x);
            const double dx = pn / (dn * (x * pn - pm) / (x * x - 1.0));
            x -= dx;
            if (std::fabs(dx) < 1e-16) break;
        }
        const auto [pn, pm] = legendre(n, x);
        const double dp = dn * (x * pn - pm) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
GaussRule build_gauss_hermite(std::size_t n) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 1; i < n; ++i) {
        const double b = std::sqrt(static_cast<double>(i));
        jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = b;
        jac(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(i)) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = es.eigenvectors()(0, static_cast<Eigen::Index>(i));
        rule.nodes[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
        rule.weights[i] = v * v;
        total += v * v;
    }
    for (double& w : rule.weights) w /= total;
    return rule;
}

}  // namespace

const GaussRule& gauss_hermite(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussRule>> cache;
    if (n == 0) throw ConfigError("Gauss-Hermite rule needs at least one node");
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussRule>(build_gauss_hermite(n));
    return *slot;
}

const GaussRule& gauss_legendre(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussRule>> cache;
    if (n == 0) throw ConfigError("Gauss-Legendre rule needs at least one node");
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussRule>(build_gauss_legendre(n));
    return *slot;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, std::size_t n, std::size_t panels) {
    const GaussRule& rule = gauss_legendre(n);
    const double width = (b - a) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + static_cast<double>(p) * width;
        const double half = 0.5 * width;
        const double mid = lo + half;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += rule.weights[i] * f(mid + half * rule.nodes[i]);
        total += s * half;
    }
    return total;
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol, unsigned max_depth) {
    double err = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, 1e-13, &err);
    if (!(err <= tol) || !std::isfinite(value)) {
        throw QuadratureError("adaptive quadrature did not converge", err);
    }
    return value;
}

double upper_gamma(double a, double x) {
    if (!(x > 0.0)) throw NumericError("upper_gamma needs x > 0");
    if (a > 0.0) return boost::math::tgamma(a, x);
    if (a == 0.0) return boost::math::expint(1, x);
    if (a == -0.5) {
        const double g_half = std::sqrt(boost::math::constants::pi<double>()) * std::erfc(std::sqrt(x));
        return -2.0 * (g_half - std::exp(-x) / std::sqrt(x));
    }
    throw NumericError("upper_gamma: unsupported parameter");
}

double heat_kernel_time_integral_1d(double r, double t) {
    if (!(t > 0.0)) return 0.0;
    r = std::fabs(r);
    const double pi = boost::math::constants::pi<double>();
    return 2.0 * std::sqrt(t / (2.0 * pi)) * std::exp(-r * r / (2.0 * t)) - r * std::erfc(r / std::sqrt(2.0 * t));
}

TensorRule tensor_gauss(std::size_t dim, double half_width, std::size_t n_per_axis) {
    const GaussRule& rule = gauss_legendre(n_per_axis);
    TensorRule out;
    out.dim = dim;
    std::size_t total = 1;
    for (std::size_t k = 0; k < dim; ++k) total *= n_per_axis;
    out.points.resize(total * dim);
    out.weights.resize(total);
    std::vector<std::size_t> idx(dim, 0);
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t rem = p;
        double w = 1.0;
        for (std::size_t k = dim; k-- > 0;) {
            idx[k] = rem % n_per_axis;
            rem /= n_per_axis;
        }
        for (std::size_t k = 0; k < dim; ++k) {
            out.points[p * dim + k] = half_width * rule.nodes[idx[k]];
            w *= half_width * rule.weights[idx[k]];
        }
        out.weights[p] = w;
    }
    return out;
}

}  // namespace flowgrad
