#include "flowgrad/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowgrad/error.hpp"
#include "flowgrad/functionals.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/parallel.hpp"
#include "flowgrad/parametrix.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/variational.hpp"

namespace flowgrad {

using nlohmann::json;

namespace {

// Experiment parameters with defaults; every key read is also an allowed key.
class Params {
public:
    Params(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
        if (!j_.is_object()) throw ConfigError(ctx_ + " must be an object");
    }

    double num(const std::string& key, double fallback) {
        allowed_.push_back(key);
        if (!j_.contains(key)) return fallback;
        if (!j_.at(key).is_number()) throw ConfigError(ctx_ + ": '" + key + "' must be a number");
        return j_.at(key).get<double>();
    }
    std::size_t count(const std::string& key, std::size_t fallback) {
        allowed_.push_back(key);
        if (!j_.contains(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() <= 0)
            throw ConfigError(ctx_ + ": '" + key + "' must be a positive integer");
        return static_cast<std::size_t>(v.get<long long>());
    }
    std::vector<double> nums(const std::string& key, std::vector<double> fallback) {
        allowed_.push_back(key);
        if (!j_.contains(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(ctx_ + ": '" + key + "' must be an array");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(ctx_ + ": '" + key + "' must hold numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<int> levels(const std::string& key, std::vector<int> fallback) {
        allowed_.push_back(key);
        if (!j_.contains(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_array() || v.empty()) throw ConfigError(ctx_ + ": '" + key + "' must be a nonempty array");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<int>() <= 0)
                throw ConfigError(ctx_ + ": '" + key + "' must hold positive integers");
            out.push_back(e.get<int>());
        }
        return out;
    }
    void finish() const { require_keys(j_, allowed_, ctx_); }

private:
    const json& j_;
    std::string ctx_;
    std::vector<std::string> allowed_;
};

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + cell(v[i]);
    return s;
}

std::vector<double> start_point(Params& p, const Config& c, std::vector<double> fallback) {
    std::vector<double> s = p.nums("start", std::move(fallback));
    if (s.size() != c.dim) throw ConfigError("experiment: start must have d entries");
    return s;
}

void require_increasing_levels(const std::vector<int>& levels, int reference) {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if ((i > 0 && levels[i] <= levels[i - 1]) || levels[i] >= reference)
            throw ConfigError("experiment: levels must increase and stay below the reference level");
}

std::vector<CoefficientSet> mollified_family(const Config& c, const std::vector<int>& levels) {
    std::vector<CoefficientSet> out;
    for (int n : levels) out.push_back(c.base.with_drift(mollify_drift(c.base.drift, n)));
    return out;
}

// flow-convergence ----------------------------------------------------------

ExperimentResult flow_convergence(const Config& c, std::uint64_t seed, std::size_t threads) {
    Params p(c.experiment, "experiment(flow-convergence)");
    const std::vector<int> levels = p.levels("levels", {4, 16, 64});
    const int reference = static_cast<int>(p.count("reference", 256));
    const std::size_t n_paths = p.count("n_paths", 2000);
    const std::size_t n_steps = p.count("n_steps", std::size_t{1} << 16);
    const double horizon = p.num("horizon", 1.0);
    const double q = p.num("quantile", 0.9);
    const std::vector<double> start = start_point(p, c, c.derivative.x);
    p.finish();
    require_increasing_levels(levels, reference);

    std::vector<int> all = levels;
    all.push_back(reference);
    const std::vector<CoefficientSet> family = mollified_family(c, all);
    const TimeGrid grid(0.0, horizon, n_steps);
    const std::size_t nl = levels.size(), d = c.dim;
    std::vector<double> sq(nl * n_paths), dy(nl * n_paths), ysup(all.size() * n_paths);
    parallel_for(
        n_paths,
        [&](std::size_t i) {
            const WienerIncrements inc = WienerIncrements::generate(grid, c.noise_dim, seed, i);
            std::vector<PathBundle> bundles;
            std::vector<MatrixPath> ys;
            for (const auto& cs : family) {
                bundles.push_back(simulate_flow(cs, {start}, inc, seed, i));
                ys.push_back(solve_variational_smooth(cs, bundles.back(), 0));
            }
            const PathBundle& ref = bundles.back();
            for (std::size_t l = 0; l < all.size(); ++l) {
                double m = 0.0;
                for (std::size_t k = 0; k <= n_steps; ++k) m = std::max(m, ys[l].norm(k));
                ysup[l * n_paths + i] = m * m;
            }
            for (std::size_t l = 0; l < nl; ++l) {
                double s = 0.0;
                for (std::size_t k = 0; k <= n_steps; ++k) {
                    double e = 0.0;
                    for (std::size_t r = 0; r < d; ++r) {
                        const double diff = bundles[l].state(0, k, r) - ref.state(0, k, r);
                        e += diff * diff;
                    }
                    s = std::max(s, e);
                }
                sq[l * n_paths + i] = s;
                dy[l * n_paths + i] = ys[l].max_distance(ys.back());
            }
        },
        threads);

    ExperimentResult r;
    r.table.columns = {"n",          "mean_sup_sq_flow_error", "se_sup_sq_flow_error", "p90_sup_derivative_error",
                       "mean_sup_derivative_error", "se_sup_derivative_error", "mean_sup_sq_derivative",
                       "se_sup_sq_derivative"};
    std::vector<double> flow, q90;
    auto slice = [&](const std::vector<double>& v, std::size_t l) {
        return std::span<const double>(v).subspan(l * n_paths, n_paths);
    };
    for (std::size_t l = 0; l < all.size(); ++l) {
        const Estimate ym = estimate(slice(ysup, l));
        if (l < nl) {
            const Estimate f = estimate(slice(sq, l));
            const Estimate e = estimate(slice(dy, l));
            const auto s = slice(dy, l);
            const double qq = quantile(std::vector<double>(s.begin(), s.end()), q);
            flow.push_back(f.mean);
            q90.push_back(qq);
            r.table.add({cell(static_cast<std::size_t>(all[l])), cell(f.mean), cell(f.se), cell(qq), cell(e.mean),
                         cell(e.se), cell(ym.mean), cell(ym.se)});
        } else {
            r.table.add({cell(static_cast<std::size_t>(all[l])), "0", "0", "0", "0", "0", cell(ym.mean), cell(ym.se)});
        }
    }
    r.checks.push_back({"flow_error_strictly_decreasing", strictly_decreasing(flow), join(flow)});
    r.checks.push_back({"derivative_quantile_strictly_decreasing", strictly_decreasing(q90), join(q90)});
    r.metrics = {{"n_paths", n_paths}, {"step", grid.step()}, {"reference", reference}, {"quantile", q}};
    return r;
}

// functional-convergence ----------------------------------------------------

ExperimentResult functional_convergence(const Config& c, std::uint64_t seed, std::size_t threads) {
    Params p(c.experiment, "experiment(functional-convergence)");
    const std::vector<int> levels = p.levels("levels", {4, 16, 64});
    const int reference = static_cast<int>(p.count("reference", 256));
    const std::size_t n_paths = p.count("n_paths", 1000);
    const std::size_t n_steps = p.count("n_steps", std::size_t{1} << 14);
    const double horizon = p.num("horizon", 1.0);
    const double q = p.num("quantile", 0.9);
    const std::vector<double> start = start_point(p, c, c.derivative.x);
    p.finish();
    require_increasing_levels(levels, reference);

    SpaceTimeMeasure mu(c.dim);
    if (c.measure) {
        mu = *c.measure;
    } else {
        const MeasureMatrix mm = c.base.drift->derivative_measure();
        for (const auto& e : mm.entries) mu = mu + e;
    }
    std::vector<int> all = levels;
    all.push_back(reference);
    std::vector<DensityPart> dens;
    for (int n : all) dens.push_back(mollify_measure_to_density(mu, n));
    const TimeGrid grid(0.0, horizon, n_steps);
    const std::size_t nl = levels.size();
    std::vector<double> sup(nl * n_paths);
    parallel_for(
        n_paths,
        [&](std::size_t i) {
            const PathBundle b = simulate_flow(c.base, {start}, grid, seed, i);
            std::vector<FunctionalPath> a;
            for (const auto& h : dens)
                a.push_back(integral_functional([&](double, std::span<const double> y) { return h.h(y); }, b, 0));
            for (std::size_t l = 0; l < nl; ++l) {
                double s = 0.0;
                for (std::size_t k = 0; k <= n_steps; ++k) s = std::max(s, std::fabs(a[l].value(k) - a.back().value(k)));
                sup[l * n_paths + i] = s;
            }
        },
        threads);

    ExperimentResult r;
    r.table.columns = {"n", "mean_sup_functional_error", "se_sup_functional_error", "p90_sup_functional_error"};
    std::vector<double> means, qs;
    for (std::size_t l = 0; l < nl; ++l) {
        const auto s = std::span<const double>(sup).subspan(l * n_paths, n_paths);
        const Estimate e = estimate(s);
        const double qq = quantile(std::vector<double>(s.begin(), s.end()), q);
        means.push_back(e.mean);
        qs.push_back(qq);
        r.table.add({cell(static_cast<std::size_t>(levels[l])), cell(e.mean), cell(e.se), cell(qq)});
    }
    r.checks.push_back({"functional_quantile_strictly_decreasing", strictly_decreasing(qs), join(qs)});
    r.checks.push_back({"functional_mean_strictly_decreasing", strictly_decreasing(means), join(means)});
    r.metrics = {{"n_paths", n_paths}, {"step", grid.step()}, {"reference", reference}};
    return r;
}

// derivative-routes ---------------------------------------------------------

ExperimentResult derivative_routes(const Config& c, std::uint64_t seed, std::size_t threads) {
    Params p(c.experiment, "experiment(derivative-routes)");
    const std::size_t n_paths = p.count("n_paths", 10000);
    const std::size_t n_steps = p.count("n_steps", std::size_t{1} << 16);
    const std::size_t refine = p.count("floor_refine", 4);
    const std::size_t pathwise = p.count("pathwise_paths", 1000);
    const std::size_t zpaths = p.count("ztransform_paths", 100);
    const double horizon = p.num("horizon", 1.0);
    const double power = p.num("p", 2.0);
    const double feps = p.num("functional_epsilon", c.derivative.functional_epsilon);
    const std::vector<double> eps = p.nums("epsilons", c.derivative.epsilons);
    const int smooth_n = static_cast<int>(p.count("smooth_level", c.mollify_n > 0 ? c.mollify_n : 64));
    const std::vector<double> x = start_point(p, c, c.derivative.x);
    p.finish();
    if (c.base.drift->is_smooth()) throw ConfigError("derivative-routes needs a BV drift");
    const std::size_t d = c.dim;

    const TimeGrid grid(0.0, horizon, n_steps);
    const std::vector<double> cov = c.base.diffusion->covariance(0.0, x);
    const DriftFunctionals functionals(c.base.drift->derivative_measure(), feps, Estimator::Band, cov);
    const CoefficientSet smooth = c.base.with_drift(mollify_drift(c.base.drift, smooth_n));

    // Pathwise agreement, Z-route consistency and the smooth route on shared paths.
    const std::size_t np = std::max(pathwise, zpaths);
    std::vector<double> ratio(np, 0.0), zdev(np, 0.0), ybv(np), ysm(np), logdiff(np);
    parallel_for(
        np,
        [&](std::size_t i) {
            const WienerIncrements inc = WienerIncrements::generate(grid, c.noise_dim, seed, i);
            const PathBundle b = simulate_flow(c.base, {x}, inc, seed, i);
            const FunctionalMatrix a = functionals(b, 0);
            const MatrixPath y = solve_variational_bv(a, *c.base.diffusion, b, 0);
            ybv[i] = y.norm(n_steps);
            if (d == 1) {
                const double at = a.at(0, 0).terminal();
                const double var = a.at(0, 0).variation(n_steps);
                const double bound = a.max_increment() * var + 1e-12;
                logdiff[i] = std::fabs(std::log(y.entry(n_steps, 0, 0)) - at);
                ratio[i] = logdiff[i] / bound;
            }
            if (i < zpaths) {
                const ZTransformResult z = z_transform_solve(a, *c.base.diffusion, b, 0);
                zdev[i] = z.y.max_distance(y) / (1e-6 * std::exp(a.total_variation()));
            }
            const PathBundle bs = simulate_flow(smooth, {x}, inc, seed, i);
            ysm[i] = solve_variational_smooth(smooth, bs, 0).norm(n_steps);
        },
        threads);
    const double worst_ratio = *std::max_element(ratio.begin(), ratio.begin() + static_cast<std::ptrdiff_t>(pathwise));
    const double worst_z = *std::max_element(zdev.begin(), zdev.begin() + static_cast<std::ptrdiff_t>(zpaths));

    FdOptions base_opts{feps, Estimator::Band, 0, threads, refine};
    FdOptions fine_opts{feps, Estimator::Band, 0, threads, 1};
    const std::vector<double> dir = c.derivative.direction;
    const std::vector<FdRow> coarse = finite_difference_derivative(c.base, x, dir, eps, grid, n_paths, power, seed, base_opts);
    const std::vector<FdRow> fine =
        finite_difference_derivative(c.base, x, dir, eps, grid.refined(refine), n_paths, power, seed, fine_opts);

    ExperimentResult r;
    r.table.columns = {"route", "step", "epsilon", "mean", "se", "n_paths"};
    const Estimate bv = estimate(std::span<const double>(ybv).first(pathwise));
    const Estimate sm = estimate(std::span<const double>(ysm).first(pathwise));
    r.table.add({"bv_abs_Y_T", cell(grid.step()), cell(feps), cell(bv.mean), cell(bv.se), cell(pathwise)});
    r.table.add({"smooth_abs_Y_T", cell(grid.step()), cell(1.0 / smooth_n), cell(sm.mean), cell(sm.se), cell(pathwise)});
    if (d == 1) {
        const Estimate ld = estimate(std::span<const double>(logdiff).first(pathwise));
        r.table.add({"bv_log_gap", cell(grid.step()), cell(feps), cell(ld.mean), cell(ld.se), cell(pathwise)});
    }
    std::vector<double> means;
    for (const auto& row : coarse) {
        r.table.add({"fd", cell(grid.step()), cell(row.epsilon), cell(row.discrepancy.mean), cell(row.discrepancy.se),
                     cell(n_paths)});
        means.push_back(row.discrepancy.mean);
    }
    for (const auto& row : fine)
        r.table.add({"fd_floor", cell(grid.refined(refine).step()), cell(row.epsilon), cell(row.discrepancy.mean),
                     cell(row.discrepancy.se), cell(n_paths)});

    const Estimate& last = coarse.back().discrepancy;
    const Estimate& flo = fine.back().discrepancy;
    const double gap = std::fabs(last.mean - flo.mean);
    const double se = std::sqrt(last.se * last.se + flo.se * flo.se);
    if (d == 1)
        r.checks.push_back({"pathwise_log_agreement", worst_ratio <= 1.0,
                            "max |log Y_T - A_T| / (max dA * Var A_T) = " + cell(worst_ratio)});
    r.checks.push_back({"ztransform_agreement", worst_z <= 1.0,
                        "max |Y_z - Y| / (1e-6 exp(Var A_T)) = " + cell(worst_z)});
    r.checks.push_back({"fd_discrepancy_decreasing", strictly_decreasing(means), join(means)});
    r.checks.push_back({"fd_floor_within_3se", gap <= 3.0 * se, "gap " + cell(gap) + " vs 3 SE " + cell(3.0 * se)});
    r.metrics = {{"n_paths", n_paths},         {"step", grid.step()},       {"floor_step", grid.refined(refine).step()},
                 {"functional_epsilon", feps}, {"worst_log_ratio", worst_ratio}, {"worst_ztransform", worst_z},
                 {"floor_gap", gap},           {"floor_se", se}};
    return r;
}

// density-convergence -------------------------------------------------------

ExperimentResult density_convergence(const Config& c, std::uint64_t, std::size_t threads) {
    Params p(c.experiment, "experiment(density-convergence)");
    const std::vector<int> levels = p.levels("levels", {4, 16, 64});
    const int reference = static_cast<int>(p.count("reference", 256));
    const double delta = p.num("delta", 0.1);
    p.finish();
    require_increasing_levels(levels, reference);
    DensityParams dp = c.density.params;
    dp.threads = threads;
    const DensityGrid g = zero_drift_density(*c.base.diffusion, dp);
    std::vector<int> all = levels;
    all.push_back(reference);
    std::vector<DensityGrid> grids;
    std::vector<double> residual, norm;
    for (int n : all) {
        const auto drift = mollify_drift(c.base.drift, n);
        PerturbationResult pr = perturbed_density(g, *c.base.diffusion, *drift, c.density.iterations, threads);
        residual.push_back(pr.residuals.back());
        norm.push_back(normalization_error(pr.density, dp.interior_margin));
        grids.push_back(std::move(pr.density));
    }
    const DensityGrid ref = grids.back();
    grids.pop_back();
    const std::vector<ConvergenceRow> rows = density_convergence_report(grids, levels, ref, delta, dp.interior_margin);
    ExperimentResult r;
    r.table.columns = {"n", "sup_restricted", "sup_all", "final_residual", "normalization_error"};
    std::vector<double> sups;
    for (std::size_t l = 0; l < rows.size(); ++l) {
        r.table.add({cell(static_cast<std::size_t>(rows[l].n)), cell(rows[l].sup_restricted), cell(rows[l].sup_all),
                     cell(residual[l]), cell(norm[l])});
        sups.push_back(rows[l].sup_restricted);
    }
    r.table.add({cell(static_cast<std::size_t>(reference)), "0", "0", cell(residual.back()), cell(norm.back())});
    r.checks.push_back({"density_error_strictly_decreasing", strictly_decreasing(sups), join(sups)});
    r.metrics = {{"delta", delta}, {"spacing", dp.spacing}, {"half_width", dp.half_width}, {"n_times", dp.n_times}};
    return r;
}

// kato-suite ----------------------------------------------------------------

ExperimentResult kato_suite(const Config& c, std::uint64_t, std::size_t) {
    Params p(c.experiment, "experiment(kato-suite)");
    p.finish();
    struct Case {
        std::string name;
        SpaceTimeMeasure mu;
        int expected;  // 1 Kato, 0 not Kato, -1 unknown
    };
    std::vector<Case> cases;
    for (std::size_t d : {1, 2, 3}) {
        SpaceTimeMeasure delta(d);
        delta.add_atom({std::vector<double>(d, 0.0), 1.0});
        cases.push_back({"point_atom", delta, d == 1 ? 1 : 0});
    }
    for (std::size_t d : {1, 2, 3}) {
        SpaceTimeMeasure h(d);
        h.add_density(constant_ball_density(d, 1.0, 1.0));
        cases.push_back({"bounded_density", h, 1});
    }
    for (std::size_t d : {2, 3}) {
        SpaceTimeMeasure plane(d);
        std::vector<double> nrm(d, 0.0);
        nrm[0] = 1.0;
        plane.add_hyperplane({nrm, 0.0, 1.0, {}, 1.0});
        cases.push_back({"hyperplane_atom", plane, 1});
    }
    if (c.measure) cases.push_back({"config_measure", *c.measure, -1});

    ExperimentResult r;
    r.table.columns = {"case", "dim", "expected", "is_kato", "final_value", "unit_ball_mass", "witness_value"};
    bool ok = true;
    for (const auto& k : cases) {
        const KatoVerdict v = classify_kato(k.mu);
        if (k.expected >= 0) ok = ok && (v.is_kato == (k.expected == 1));
        r.table.add({k.name, cell(k.mu.dim()), k.expected < 0 ? "" : (k.expected ? "true" : "false"),
                     v.is_kato ? "true" : "false", cell(v.values.empty() ? 0.0 : v.values.back()), cell(v.unit_ball_mass),
                     cell(v.witness_value)});
    }
    r.checks.push_back({"verdicts_match", ok, "point atom Kato only in d = 1; densities and hyperplanes Kato"});
    return r;
}

// exp-moments ---------------------------------------------------------------

ExperimentResult exp_moments(const Config& c, std::uint64_t seed, std::size_t threads) {
    Params p(c.experiment, "experiment(exp-moments)");
    const std::vector<int> levels = p.levels("levels", {4, 16, 64});
    const std::size_t n_paths = p.count("n_paths", 10000);
    const std::size_t n_steps = p.count("n_steps", std::size_t{1} << 14);
    const double horizon = p.num("horizon", 1.0);
    const double power = p.num("p", 1.0);
    const double band = p.num("band_epsilon", 0.05);
    p.finish();
    if (c.dim != 1) throw ConfigError("exp-moments is defined for d = 1");

    SpaceTimeMeasure delta(1);
    delta.add_atom({{0.0}, 1.0});
    std::vector<DensityPart> dens;
    for (int n : levels) dens.push_back(mollify_measure_to_density(delta, n));
    const TimeGrid grid(0.0, horizon, n_steps);
    const std::size_t nl = levels.size();
    std::vector<double> a((nl + 1) * n_paths);
    const CoefficientSet bm = make_coefficients(std::make_shared<const DriftSpec>(1, 1.0, drift::Zero{}),
                                                std::make_shared<const DiffusionSpec>(1, 1, diffusion::Identity{}));
    parallel_for(
        n_paths,
        [&](std::size_t i) {
            const PathBundle b = simulate_flow(bm, {{0.0}}, grid, seed, i);
            for (std::size_t l = 0; l < nl; ++l)
                a[l * n_paths + i] =
                    integral_functional([&](double, std::span<const double> y) { return dens[l].h(y); }, b, 0).terminal();
            a[nl * n_paths + i] = local_time_1d(b, 0, 0.0, band).terminal();
        },
        threads);

    ExperimentResult r;
    r.table.columns = {"n", "mean_exp_pA", "se_exp_pA", "mean_A", "se_A"};
    std::vector<Estimate> est;
    for (std::size_t l = 0; l <= nl; ++l) {
        const auto s = std::span<const double>(a).subspan(l * n_paths, n_paths);
        const Estimate e = exp_moment_estimate(s, power);
        const Estimate m = estimate(s);
        est.push_back(e);
        r.table.add({l < nl ? cell(static_cast<std::size_t>(levels[l])) : "band", cell(e.mean), cell(e.se), cell(m.mean),
                     cell(m.se)});
    }
    bool finite = true, stable = true;
    std::string detail;
    for (std::size_t i = 0; i < nl; ++i) {
        finite = finite && std::isfinite(est[i].mean);
        for (std::size_t j = i + 1; j < nl; ++j) {
            const double gap = std::fabs(est[i].mean - est[j].mean);
            const double se = std::sqrt(est[i].se * est[i].se + est[j].se * est[j].se);
            stable = stable && gap <= 3.0 * se;
            detail += "n" + std::to_string(levels[i]) + "-n" + std::to_string(levels[j]) + ": gap " + cell(gap) +
                      " vs 3 SE " + cell(3.0 * se) + "; ";
        }
    }
    r.checks.push_back({"exp_moment_finite", finite, ""});
    r.checks.push_back({"exp_moment_stable_3se", stable, detail});
    r.metrics = {{"n_paths", n_paths}, {"step", grid.step()}, {"p", power}};
    return r;
}

}  // namespace

std::string cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string cell(std::size_t v) { return std::to_string(v); }

void Table::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw ConfigError("table row has the wrong number of cells");
    rows.push_back(std::move(row));
}

std::string Table::csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
    }
    return out.str();
}

bool ExperimentResult::passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

json ExperimentResult::summary(bool with_timestamp) const {
    json checks_json = json::array();
    for (const auto& c : checks) checks_json.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    json s = {{"schema", "flowgrad.experiment.summary"},
              {"schema_version", summary_schema_version},
              {"experiment", name},
              {"seed", seed},
              {"passed", passed()},
              {"checks", checks_json},
              {"metrics", metrics},
              {"table", "table.csv"}};
    if (with_timestamp) {
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        s["metadata"] = {{"generated_at", buf}};
    }
    return s;
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"flow-convergence",    "functional-convergence", "derivative-routes",
                                                "density-convergence", "kato-suite",             "exp-moments"};
    return names;
}

ExperimentResult run_experiment(const std::string& name, const Config& config, std::uint64_t seed,
                                std::size_t threads) {
    ExperimentResult r;
    if (name == "flow-convergence")
        r = flow_convergence(config, seed, threads);
    else if (name == "functional-convergence")
        r = functional_convergence(config, seed, threads);
    else if (name == "derivative-routes")
        r = derivative_routes(config, seed, threads);
    else if (name == "density-convergence")
        r = density_convergence(config, seed, threads);
    else if (name == "kato-suite")
        r = kato_suite(config, seed, threads);
    else if (name == "exp-moments")
        r = exp_moments(config, seed, threads);
    else
        throw ConfigError("unknown experiment '" + name + "'");
    r.name = name;
    r.seed = seed;
    return r;
}

void write_experiment(const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(out_dir) / result.name / std::to_string(result.seed);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string());
    std::ofstream table(dir / "table.csv", std::ios::binary);
    std::ofstream summary(dir / "summary.json", std::ios::binary);
    if (!table || !summary) throw ConfigError("cannot write experiment outputs under " + dir.string());
    table << result.table.csv();
    summary << result.summary().dump(2) << '\n';
}

}  // namespace flowgrad
