// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
// Usage: flowgrad_acceptance [AC1 AC2 ...] (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/config.hpp"
#include "flowgrad/experiments.hpp"
#include "flowgrad/functionals.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/parallel.hpp"
#include "flowgrad/parametrix.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/stats.hpp"
#include "flowgrad/variational.hpp"

using namespace flowgrad;
using nlohmann::json;

namespace {

const double sqrt_2_over_pi = 0.797884560802865356;

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

CoefficientSet coefficients(std::size_t d, DriftParams p, DiffusionParams s = diffusion::Identity{}, double R = 10.0) {
    return make_coefficients(std::make_shared<const DriftSpec>(d, R, std::move(p)),
                             std::make_shared<const DiffusionSpec>(d, d, std::move(s)));
}

Config sign_config(json experiment = json::object()) {
    json doc = {{"schema_version", 1},
                {"dim", 1},
                {"bound_R", 10},
                {"drift", {{"type", "sign1d"}, {"kappa", 0.5}}},
                {"diffusion", {{"type", "identity"}}},
                {"derivative", {{"x", {0.5}}, {"direction", {1.0}}, {"epsilons", {0.1, 0.01, 0.001}}, {"p", 2}}},
                {"experiment", std::move(experiment)}};
    return parse_config(doc);
}

std::string check_lines(const ExperimentResult& r) {
    std::string s;
    for (const auto& c : r.checks) s += "\n    " + c.name + (c.passed ? " ok: " : " FAILED: ") + c.detail;
    std::istringstream t(r.table.csv());
    for (std::string line; std::getline(t, line);) s += "\n    | " + line;
    return s;
}

// AC1 ------------------------------------------------------------------------

Outcome ac1() {
    bool ok = true;
    std::string detail;
    auto expect = [&](const std::string& name, const SpaceTimeMeasure& m, bool want) {
        const KatoVerdict v = classify_kato(m);
        ok = ok && v.is_kato == want;
        detail += name + "=" + (v.is_kato ? "kato" : "non-kato") + (v.is_kato == want ? "" : "(WRONG)") + " ";
    };
    for (std::size_t d : {1, 2}) {
        SpaceTimeMeasure m(d);
        m.add_atom({std::vector<double>(d, 0.0), 1.0});
        expect("delta0_d" + std::to_string(d), m, d == 1);
    }
    for (std::size_t d : {1, 2, 3}) {
        SpaceTimeMeasure m(d);
        m.add_density(constant_ball_density(d, 1.0, 2.0));
        expect("density_d" + std::to_string(d), m, true);
    }
    SpaceTimeMeasure plane(2);
    plane.add_hyperplane({{1.0, 0.0}, 0.0, 1.0, {}, 1.0});
    expect("hyperplane_d2", plane, true);
    return {ok, detail};
}

// AC2 ------------------------------------------------------------------------

Outcome ac2() {
    const CoefficientSet bm = coefficients(1, drift::Zero{});
    const TimeGrid grid(0.0, 1.0, 1 << 14);
    const std::size_t n = 100000;
    const double eps = 0.05;
    std::vector<double> raw(n), rich(n);
    parallel_for(n, [&](std::size_t i) {
        const PathBundle b = simulate_flow(bm, {{0.0}}, grid, 2024, i);
        const FunctionalPath fine = local_time_1d(b, 0, 0.0, eps);
        const FunctionalPath coarse = local_time_1d(b, 0, 0.0, 2.0 * eps);
        raw[i] = fine.terminal();
        rich[i] = richardson(fine, coarse).back();
    });
    const Estimate r = estimate(raw), e = estimate(rich);
    const bool ok = std::fabs(e.mean - sqrt_2_over_pi) <= 3.0 * e.se;
    return {ok, "Richardson 2L^0.05 - L^0.1 = " + num(e.mean) + " +- " + num(e.se) + " vs " + num(sqrt_2_over_pi) +
                    " (raw band L^0.05 = " + num(r.mean) + " +- " + num(r.se) + ", bias O(eps))"};
}

// AC3 ------------------------------------------------------------------------

Outcome ac3() {
    const CoefficientSet c = coefficients(1, drift::Linear{{0.3}});
    const TimeGrid grid(0.0, 1.0, 1 << 14);
    const PathBundle b = simulate_flow(c, {{0.0}}, grid, 1, 0);
    const double y = solve_variational_smooth(c, b).entry(grid.n_steps(), 0, 0);
    const double err = std::fabs(y - std::exp(0.3));
    return {err <= 1e-3, "Y_1 = " + num(y) + ", |Y_1 - e^0.3| = " + num(err)};
}

// AC4 ------------------------------------------------------------------------

Outcome ac4() {
    const ExperimentResult r = run_experiment("derivative-routes", sign_config(), 1);
    return {r.passed(), "derivative-routes" + check_lines(r)};
}

// AC5 ------------------------------------------------------------------------

Outcome ac5() {
    const ExperimentResult r = run_experiment("flow-convergence", sign_config(), 1);
    return {r.passed(), "flow-convergence" + check_lines(r)};
}

// AC6 ------------------------------------------------------------------------

Outcome ac6() {
    const CoefficientSet c = coefficients(1, drift::Sign{0.5});
    const TimeGrid grid(0.0, 1.0, 1 << 12);
    const PathIntegrand h = [](double t, std::span<const double> y) { return std::cos(2.0 * y[0]) * (1.0 + t); };
    double worst_add = 0.0;
    for (std::uint64_t id = 0; id < 100; ++id) {
        const WienerIncrements inc = WienerIncrements::generate(grid, 1, 77, id);
        const PathBundle full = simulate_flow(c, {{0.0}}, inc);
        const std::size_t k0 = 1 + (id * 37) % (grid.n_steps() - 1);
        const PathBundle tail = simulate_flow(c, {{full.state(0, k0)}}, inc.slice(k0, grid.n_steps() - k0));
        const FunctionalPath a = integral_functional(h, full);
        // The sliced grid keeps absolute times, so h sees the same (t, y) pairs.
        const FunctionalPath s = integral_functional(h, tail);
        for (std::size_t k = 0; k + k0 <= grid.n_steps(); ++k)
            worst_add = std::max(worst_add, std::fabs(a.value(k0 + k) - a.value(k0) - s.value(k)));
    }

    // Occupation identity ∫_0^1 h(W_s) ds = ∫ h(y) L_1^y dy for a smooth bump h.
    const CoefficientSet bm = coefficients(1, drift::Zero{});
    const PathIntegrand bump = [](double, std::span<const double> y) { return unit_bump(y[0] * y[0] / 4.0); };
    const double eps = 0.01, dy = 0.005;
    double worst_occ = 0.0;
    for (std::uint64_t id = 0; id < 100; ++id) {
        const PathBundle b = simulate_flow(bm, {{0.0}}, grid, 78, id);
        const double lhs = integral_functional(bump, b).terminal();
        double rhs = 0.0;
        for (double y = -2.0 + 0.5 * dy; y < 2.0; y += dy) {
            const std::vector<double> yy{y};
            rhs += bump(0.0, yy) * local_time_1d(b, 0, y, eps).terminal() * dy;
        }
        worst_occ = std::max(worst_occ, std::fabs(lhs - rhs) / (1.0 + std::fabs(lhs)));
    }
    const bool ok = worst_add <= 1e-12 && worst_occ <= 5e-3;
    return {ok, "additivity max gap " + num(worst_add) + " (tol 1e-12); occupation max rel gap " + num(worst_occ) +
                    " (tol 5e-3)"};
}

// AC7 ------------------------------------------------------------------------

Outcome ac7() {
    std::string detail;
    bool ok = true;
    const DiffusionSpec id(1, 1, diffusion::Identity{});

    DensityParams small;
    small.half_width = 3.0;
    small.spacing = 0.05;
    small.n_times = 4;
    small.interior_margin = 1.0;
    const DensityGrid g0 = zero_drift_density(id, small);
    const PerturbationResult exact = perturbed_density(g0, id, DriftSpec(1, 10.0, drift::Zero{}), 6);
    const bool zero_ok = exact.density.values == g0.values && exact.residuals.back() == 0.0;
    ok = ok && zero_ok;
    detail += std::string("zero drift exact: ") + (zero_ok ? "yes" : "NO");

    auto sign = std::make_shared<const DriftSpec>(1, 5.0, drift::Sign{0.5});
    const auto drift = mollify_drift(sign, 16);
    DensityParams dp;  // L = 6, δx = 0.02, 16 times on (0, 1]
    const DensityGrid g = zero_drift_density(id, dp);
    const PerturbationResult pr = perturbed_density(g, id, *drift, 6);
    const double ratio = pr.residual(6) / pr.residual(3);
    const std::size_t last = pr.density.times.size() - 1;
    const double ck = chapman_kolmogorov_deviation(pr.density, 7, 7, dp.interior_margin);
    const double norm = normalization_error(pr.density, dp.interior_margin);
    ok = ok && ratio < 0.2 && ck <= 5e-3 && norm <= 1e-3;
    detail += "; residual(6)/residual(3) = " + num(ratio) + "; CK deviation = " + num(ck) +
              "; normalization = " + num(norm);

    DensityParams cp = dp;
    cp.spacing = 2.0 * dp.spacing;
    cp.n_times = dp.n_times / 2;
    const PerturbationResult coarse = perturbed_density(zero_drift_density(id, cp), id, *drift, 6);

    const double x0 = 0.5, lo = -3.0, hi = 3.0;
    const std::size_t bins = 60, n_paths = 1000000;
    const std::vector<double> x0v{x0};
    const std::vector<double> pg = bin_masses(pr.density, last, pr.density.lattice.nearest(x0v), lo, hi, bins);
    const std::vector<double> pc =
        bin_masses(coarse.density, coarse.density.times.size() - 1, coarse.density.lattice.nearest(x0v), lo, hi, bins);

    const CoefficientSet c = coefficients(1, drift::Sign{0.5}, diffusion::Identity{}, 5.0).with_drift(drift);
    const TimeGrid grid(0.0, 1.0, 1024);
    const std::vector<double> xt = monte_carlo_samples(
        n_paths, [&](std::uint64_t i) { return simulate_flow(c, {x0v}, grid, 4242, i).state(0, grid.n_steps()); });
    std::vector<double> counts(bins, 0.0);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (double v : xt)
        if (v >= lo && v < hi) counts[std::min(bins - 1, static_cast<std::size_t>((v - lo) / w))] += 1.0;
    double worst = 0.0;
    std::size_t bad = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double p = counts[b] / static_cast<double>(n_paths);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n_paths));
        const double env = std::fabs(pg[b] - pc[b]);
        const double gap = std::fabs(pg[b] - p);
        const double allowed = 3.0 * (se + env);
        worst = std::max(worst, gap / allowed);
        if (gap > allowed) ++bad;
    }
    ok = ok && bad == 0;
    detail += "; histogram: worst gap/(3(SE+env)) = " + num(worst) + ", bins outside = " + std::to_string(bad) + "/60";
    return {ok, detail};
}

// AC8 ------------------------------------------------------------------------

Outcome ac8() {
    const ExperimentResult r = run_experiment("exp-moments", sign_config(), 1);
    return {r.passed(), "exp-moments" + check_lines(r)};
}

// AC9 ------------------------------------------------------------------------

Outcome ac9() {
    namespace fs = std::filesystem;
    const json small = {{"n_paths", 64}, {"n_steps", 512}};
    std::vector<std::pair<std::string, Config>> runs;
    runs.emplace_back("flow-convergence", sign_config({{"n_paths", 32}, {"n_steps", 1024}, {"reference", 128}}));
    runs.emplace_back("functional-convergence", sign_config({{"n_paths", 32}, {"n_steps", 1024}, {"reference", 128}}));
    runs.emplace_back("derivative-routes", sign_config({{"n_paths", 64},
                                                        {"n_steps", 512},
                                                        {"pathwise_paths", 16},
                                                        {"ztransform_paths", 8},
                                                        {"floor_refine", 2}}));
    runs.emplace_back("exp-moments", sign_config(small));
    runs.emplace_back("kato-suite", sign_config());
    {
        json doc = {{"schema_version", 1},
                    {"dim", 1},
                    {"bound_R", 3},
                    {"drift", {{"type", "sign1d"}, {"kappa", 0.5}}},
                    {"diffusion", {{"type", "identity"}}},
                    {"density",
                     {{"half_width", 3}, {"spacing", 0.1}, {"n_times", 4}, {"iterations", 3}, {"interior_margin", 1}}},
                    {"experiment", {{"levels", {4, 8}}, {"reference", 16}}}};
        runs.emplace_back("density-convergence", parse_config(doc));
    }
    const fs::path root = fs::temp_directory_path() / "flowgrad_acceptance_ac9";
    fs::remove_all(root);
    bool ok = true;
    std::string detail;
    for (const auto& [name, cfg] : runs) {
        std::string tables[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path out = root / std::to_string(rep);
            write_experiment(run_experiment(name, cfg, 99, rep == 0 ? 1 : 4), out.string());
            std::ifstream in(out / name / "99" / "table.csv", std::ios::binary);
            std::stringstream s;
            s << in.rdbuf();
            tables[rep] = s.str();
        }
        const bool same = !tables[0].empty() && tables[0] == tables[1];
        ok = ok && same;
        detail += name + (same ? "=identical " : "=DIFFERENT ");
    }
    fs::remove_all(root);
    return {ok, detail + "(reruns with 1 and 4 threads)"};
}

struct Criterion {
    std::string id;
    double budget_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"AC1", 10, ac1},  {"AC2", 120, ac2}, {"AC3", 5, ac3},   {"AC4", 600, ac4}, {"AC5", 900, ac5},
        {"AC6", 60, ac6},  {"AC7", 600, ac7}, {"AC8", 300, ac8}, {"AC9", 600, ac9}};
    std::set<std::string> wanted(argv + 1, argv + argc);
    set_default_threads(resolve_threads(0));
    int failures = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.passed && in_time;
        if (!pass) ++failures;
        std::printf("%s %s (%.1f s, budget %.0f s%s): %s\n", pass ? "PASS" : "FAIL", c.id.c_str(), secs,
                    c.budget_seconds, in_time ? "" : ", OVER BUDGET", o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
