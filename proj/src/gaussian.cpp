#include "flowgrad/gaussian.hpp"

#include <Eigen/Dense>
#include <boost/math/constants/constants.hpp>
#include <cmath>

#include "flowgrad/error.hpp"

namespace flowgrad {

double GaussianFrame::quadratic(std::span<const double> x, std::span<const double> y) const noexcept {
    double q = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < dim; ++j) row += inv[i * dim + j] * (y[j] - x[j]);
        q += (y[i] - x[i]) * row;
    }
    return q;
}

GaussianFrame make_gaussian_frame(std::span<const double> cov, std::size_t dim) {
    GaussianFrame f;
    f.dim = dim;
    f.cov.assign(dim * dim, 0.0);
    if (cov.empty()) {
        for (std::size_t i = 0; i < dim; ++i) f.cov[i * dim + i] = 1.0;
    } else {
        if (cov.size() != dim * dim) throw ConfigError("covariance must be d x d");
        f.cov.assign(cov.begin(), cov.end());
    }
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            b(i, j) = f.cov[static_cast<std::size_t>(i * n + j)];
            if (std::fabs(b(i, j) - f.cov[static_cast<std::size_t>(j * n + i)]) > 1e-12 * (1.0 + std::fabs(b(i, j))))
                throw NumericError("covariance is not symmetric");
        }
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    f.chol.resize(dim * dim);
    f.inv.resize(dim * dim);
    f.det = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        f.det *= l(i, i) * l(i, i);
        for (Eigen::Index j = 0; j < n; ++j) {
            f.chol[static_cast<std::size_t>(i * n + j)] = l(i, j);
            f.inv[static_cast<std::size_t>(i * n + j)] = inv(i, j);
        }
    }
    return f;
}

double gaussian_kernel(const GaussianFrame& frame, double elapsed, std::span<const double> x0,
                       std::span<const double> y) noexcept {
    const double two_pi = boost::math::constants::two_pi<double>();
    const double q = frame.quadratic(x0, y);
    const double norm = std::pow(two_pi * elapsed, -0.5 * static_cast<double>(frame.dim)) / std::sqrt(frame.det);
    return norm * std::exp(-0.5 * q / elapsed);
}

double gaussian_kernel(double t0, std::span<const double> x0, double s, std::span<const double> y,
                       std::span<const double> cov) {
    if (!(s > t0)) throw ConfigError("gaussian_kernel requires s > t0");
    if (x0.size() != y.size()) throw ConfigError("gaussian_kernel: dimension mismatch");
    return gaussian_kernel(make_gaussian_frame(cov, x0.size()), s - t0, x0, y);
}

}  // namespace flowgrad
