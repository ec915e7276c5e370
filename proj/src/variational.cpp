#include "flowgrad/variational.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "flowgrad/error.hpp"
#include "flowgrad/parallel.hpp"

namespace flowgrad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Mat> as_cmat(std::span<const double> v, std::size_t d) {
    return Eigen::Map<const Mat>(v.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

Eigen::Map<Mat> as_mat(std::span<double> v, std::size_t d) {
    return Eigen::Map<Mat>(v.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

// Σ_k ∇σ_k(t, x) ΔW_k as a d×d matrix.
void noise_matrix(const DiffusionSpec& diff, double t, std::span<const double> x, std::span<const double> dw,
                  Mat& out, std::vector<double>& scratch) {
    const std::size_t d = diff.dim();
    out.setZero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < diff.noise_dim(); ++k) {
        diff.gradient(t, x, k, scratch);
        out += dw[k] * as_cmat(scratch, d);
    }
}

void check_grids(const FunctionalMatrix& a, const PathBundle& bundle, std::size_t start) {
    if (!(a.grid() == bundle.grid)) throw ConfigError("functional grid does not match the path grid");
    if (a.dim() != bundle.dim) throw ConfigError("functional matrix has the wrong dimension");
    if (start >= bundle.trajectories.size()) throw ConfigError("start index out of range");
}

}  // namespace

// MatrixPath -----------------------------------------------------------------

MatrixPath::MatrixPath(const TimeGrid& grid, std::size_t dim)
    : grid_(grid), dim_(dim), values_(grid.n_nodes() * dim * dim, 0.0) {
    for (std::size_t i = 0; i < dim; ++i) values_[i * dim + i] = 1.0;
}

double MatrixPath::norm(std::size_t k) const noexcept {
    double s = 0.0;
    for (double v : at(k)) s += v * v;
    return std::sqrt(s);
}

double MatrixPath::max_distance(const MatrixPath& other) const {
    if (!(other.grid_ == grid_) || other.dim_ != dim_) throw ConfigError("matrix paths are not comparable");
    double m = 0.0;
    for (std::size_t k = 0; k < grid_.n_nodes(); ++k) {
        double s = 0.0;
        for (std::size_t e = 0; e < dim_ * dim_; ++e) {
            const double diff = at(k)[e] - other.at(k)[e];
            s += diff * diff;
        }
        m = std::max(m, std::sqrt(s));
    }
    return m;
}

// FunctionalMatrix -----------------------------------------------------------

FunctionalMatrix::FunctionalMatrix(const TimeGrid& grid, std::size_t dim)
    : dim_(dim), entries_(dim * dim, FunctionalPath(grid)) {}

FunctionalMatrix::FunctionalMatrix(std::size_t dim, std::vector<FunctionalPath> entries)
    : dim_(dim), entries_(std::move(entries)) {
    if (entries_.size() != dim * dim || dim == 0) throw ConfigError("functional matrix needs d*d entries");
    for (const auto& e : entries_)
        if (!(e.grid() == entries_.front().grid())) throw ConfigError("functional matrix entries use different grids");
}

void FunctionalMatrix::increment(std::size_t k, std::span<double> out) const noexcept {
    for (std::size_t e = 0; e < entries_.size(); ++e) out[e] = entries_[e].increment(k);
}

double FunctionalMatrix::total_variation() const noexcept {
    double s = 0.0;
    for (const auto& e : entries_) s += e.variation(e.grid().n_steps());
    return s;
}

double FunctionalMatrix::max_increment() const noexcept {
    double m = 0.0;
    for (const auto& e : entries_) m = std::max(m, e.max_increment());
    return m;
}

DriftFunctionals::DriftFunctionals(const MeasureMatrix& measure, double epsilon, Estimator estimator,
                                   std::span<const double> covariance)
    : dim_(measure.dim) {
    entries_.reserve(measure.entries.size());
    for (const auto& m : measure.entries) {
        if (m.empty())
            entries_.emplace_back();
        else
            entries_.emplace_back(std::in_place, m, epsilon, estimator, covariance);
    }
}

FunctionalMatrix DriftFunctionals::operator()(const PathBundle& bundle, std::size_t start_index) const {
    std::vector<FunctionalPath> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e ? (*e)(bundle, start_index) : FunctionalPath(bundle.grid));
    return FunctionalMatrix(dim_, std::move(out));
}

// Solvers --------------------------------------------------------------------

MatrixPath solve_variational_smooth(const CoefficientSet& coeffs, const PathBundle& bundle, std::size_t start_index) {
    const std::size_t d = coeffs.dim;
    if (!coeffs.drift->is_smooth()) throw ConfigError("smooth variational solver needs a smooth drift");
    if (start_index >= bundle.trajectories.size()) throw ConfigError("start index out of range");
    const TimeGrid& grid = bundle.grid;
    const double dt = grid.step();
    const bool noisy = !coeffs.diffusion->has_zero_gradient();
    MatrixPath y(grid, d);
    std::vector<double> grad(d * d), scratch(d * d);
    if (d == 1 && !noisy) {
        double yk = 1.0;
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            coeffs.drift->gradient(grid.node(k), bundle.point(start_index, k), grad);
            yk = yk + (dt * grad[0]) * yk;
            y.at(k + 1)[0] = yk;
        }
        return y;
    }
    Mat step(d, d), noise(d, d);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const std::span<const double> x = bundle.point(start_index, k);
        coeffs.drift->gradient(grid.node(k), x, grad);
        step = dt * as_cmat(grad, d);
        if (noisy) {
            noise_matrix(*coeffs.diffusion, grid.node(k), x, bundle.increments.row(k), noise, scratch);
            step += noise;
        }
        as_mat(y.at(k + 1), d) = as_mat(y.at(k), d) + step * as_mat(y.at(k), d);
    }
    return y;
}

MatrixPath solve_variational_bv(const FunctionalMatrix& functionals, const DiffusionSpec& diffusion,
                                const PathBundle& bundle, std::size_t start_index) {
    check_grids(functionals, bundle, start_index);
    const std::size_t d = bundle.dim;
    const TimeGrid& grid = bundle.grid;
    const bool noisy = !diffusion.has_zero_gradient();
    MatrixPath y(grid, d);
    std::vector<double> inc(d * d), scratch(d * d);
    if (d == 1 && !noisy) {
        const FunctionalPath& a = functionals.at(0, 0);
        double yk = 1.0;
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            yk = yk + a.increment(k) * yk;
            y.at(k + 1)[0] = yk;
        }
        return y;
    }
    Mat step(d, d), noise(d, d);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        functionals.increment(k, inc);
        step = as_cmat(inc, d);
        if (noisy) {
            noise_matrix(diffusion, grid.node(k), bundle.point(start_index, k), bundle.increments.row(k), noise, scratch);
            step += noise;
        }
        as_mat(y.at(k + 1), d) = as_mat(y.at(k), d) + step * as_mat(y.at(k), d);
    }
    return y;
}

ZTransformResult z_transform_solve(const FunctionalMatrix& functionals, const DiffusionSpec& diffusion,
                                   const PathBundle& bundle, std::size_t start_index) {
    check_grids(functionals, bundle, start_index);
    const std::size_t d = bundle.dim;
    const TimeGrid& grid = bundle.grid;
    const bool noisy = !diffusion.has_zero_gradient();
    ZTransformResult r{MatrixPath(grid, d), MatrixPath(grid, d), MatrixPath(grid, d)};
    const Mat eye = Mat::Identity(d, d);
    Mat v = eye, noise(d, d), yk(d, d);
    std::vector<double> inc(d * d), scratch(d * d);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        functionals.increment(k, inc);
        const Mat forward = eye + as_cmat(inc, d);
        const Eigen::FullPivLU<Mat> lu(forward);
        if (!lu.isInvertible() || std::fabs(lu.determinant()) < 1e-12)
            throw NumericError("z-transform: E + dA is singular at node " + std::to_string(k) +
                               " (functional increments too coarse)");
        const auto z_k = as_mat(r.z.at(k), d);
        const auto zinv_k = as_mat(r.z_inverse.at(k), d);
        yk = zinv_k * v;
        as_mat(r.z.at(k + 1), d) = z_k * lu.inverse();
        as_mat(r.z_inverse.at(k + 1), d) = forward * zinv_k;
        if (noisy) {
            noise_matrix(diffusion, grid.node(k), bundle.point(start_index, k), bundle.increments.row(k), noise, scratch);
            v += as_mat(r.z.at(k + 1), d) * noise * yk;
        }
        as_mat(r.y.at(k + 1), d) = as_mat(r.z_inverse.at(k + 1), d) * v;
    }
    return r;
}

std::vector<FdRow> finite_difference_derivative(const CoefficientSet& coeffs, std::span<const double> x,
                                                std::span<const double> direction,
                                                const std::vector<double>& epsilons, const TimeGrid& grid,
                                                std::size_t n_paths, double p, std::uint64_t seed,
                                                const FdOptions& options) {
    const std::size_t d = coeffs.dim;
    if (x.size() != d || direction.size() != d) throw ConfigError("finite differences: dimension mismatch");
    double vn = 0.0;
    for (double c : direction) vn += c * c;
    if (std::fabs(std::sqrt(vn) - 1.0) > 1e-12) throw ConfigError("finite differences: |v| must be 1");
    if (epsilons.empty()) throw ConfigError("finite differences: no epsilons");
    for (std::size_t i = 0; i < epsilons.size(); ++i)
        if (!(epsilons[i] > 0.0) || (i > 0 && !(epsilons[i] < epsilons[i - 1])))
            throw ConfigError("finite differences: epsilons must be positive and decreasing");
    if (!(p > 0.0) || n_paths == 0 || options.noise_refine == 0) throw ConfigError("finite differences: bad options");

    std::vector<std::vector<double>> starts{std::vector<double>(x.begin(), x.end())};
    for (double e : epsilons) {
        std::vector<double> s(x.begin(), x.end());
        for (std::size_t i = 0; i < d; ++i) s[i] += e * direction[i];
        starts.push_back(std::move(s));
    }
    const bool smooth = coeffs.drift->is_smooth();
    std::optional<DriftFunctionals> functionals;
    if (!smooth) {
        const std::vector<double> cov = coeffs.diffusion->covariance(0.0, x);
        functionals.emplace(coeffs.drift->derivative_measure(), options.functional_epsilon, options.estimator, cov);
    }

    const std::size_t ne = epsilons.size();
    std::vector<double> samples(n_paths * ne);
    parallel_for(
        n_paths,
        [&](std::size_t i) {
            const std::uint64_t id = options.first_path_id + i;
            const WienerIncrements inc =
                options.noise_refine == 1
                    ? WienerIncrements::generate(grid, coeffs.noise_dim, seed, id)
                    : WienerIncrements::generate(grid.refined(options.noise_refine), coeffs.noise_dim, seed, id)
                          .coarsened(options.noise_refine);
            const PathBundle bundle = simulate_flow(coeffs, starts, inc, seed, id);
            const MatrixPath y = smooth ? solve_variational_smooth(coeffs, bundle, 0)
                                        : solve_variational_bv((*functionals)(bundle, 0), *coeffs.diffusion, bundle, 0);
            const std::size_t n = grid.n_steps();
            const std::span<const double> yt = y.at(n);
            for (std::size_t e = 0; e < ne; ++e) {
                double s = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    double yv = 0.0;
                    for (std::size_t c = 0; c < d; ++c) yv += yt[r * d + c] * direction[c];
                    const double q = (bundle.state(e + 1, n, r) - bundle.state(0, n, r)) / epsilons[e];
                    s += (q - yv) * (q - yv);
                }
                samples[e * n_paths + i] = std::pow(std::sqrt(s), p);
            }
        },
        options.threads);

    std::vector<FdRow> rows;
    for (std::size_t e = 0; e < ne; ++e)
        rows.push_back({epsilons[e], estimate(std::span<const double>(samples).subspan(e * n_paths, n_paths))});
    return rows;
}

}  // namespace flowgrad
