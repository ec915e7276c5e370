#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "flowgrad/config.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/experiments.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/parallel.hpp"
#include "flowgrad/parametrix.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/stats.hpp"
#include "flowgrad/variational.hpp"

namespace fs = std::filesystem;
using namespace flowgrad;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out = "results";
    std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON configuration file")->required();
    cmd->add_option("--seed", c.seed, "64-bit seed");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker cap (default: FLOWGRAD_THREADS or all cores)");
}

fs::path prepare(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
    return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << text;
}

int cmd_simulate(const Common& c, std::optional<std::size_t> n_paths) {
    const Config cfg = load_config(c.config);
    const SimulationConfig& s = cfg.simulation;
    const TimeGrid grid(s.t0, s.horizon, s.n_steps);
    const std::size_t np = n_paths.value_or(s.n_paths);
    const bool many = s.starts.size() > 1;
    std::vector<std::string> chunks(np);
    parallel_for(
        np,
        [&](std::size_t i) {
            const PathBundle b = simulate_flow(cfg.coefficients, s.starts, grid, c.seed, i);
            std::ostringstream o;
            for (std::size_t st = 0; st < s.starts.size(); ++st)
                for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
                    o << i;
                    if (many) o << ',' << st;
                    o << ',' << cell(grid.node(k));
                    for (std::size_t r = 0; r < cfg.dim; ++r) o << ',' << cell(b.state(st, k, r));
                    o << '\n';
                }
            chunks[i] = o.str();
        },
        c.threads);
    std::string text = many ? "path_id,start,t" : "path_id,t";
    for (std::size_t r = 0; r < cfg.dim; ++r) text += ",x_" + std::to_string(r + 1);
    text += '\n';
    for (const auto& ch : chunks) text += ch;
    write_text(prepare(c.out) / "trajectories.csv", text);
    return 0;
}

// Mean and SE of every Y entry on (at most) 256 output nodes.
Table route_table(const std::string& route, const std::vector<MatrixPath>& ys) {
    const TimeGrid& grid = ys.front().grid();
    const std::size_t d = ys.front().dim(), n = grid.n_steps();
    const std::size_t stride = std::max<std::size_t>(1, n / 256);
    Table t;
    t.columns = {"route", "t"};
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            t.columns.push_back("Y_" + std::to_string(i + 1) + std::to_string(j + 1));
            t.columns.push_back("se_Y_" + std::to_string(i + 1) + std::to_string(j + 1));
        }
    std::vector<double> v(ys.size());
    for (std::size_t k = 0; k <= n; k += stride) {
        std::vector<std::string> row{route, cell(grid.node(k))};
        for (std::size_t e = 0; e < d * d; ++e) {
            for (std::size_t p = 0; p < ys.size(); ++p) v[p] = ys[p].at(k)[e];
            const Estimate est = estimate(v);
            row.push_back(cell(est.mean));
            row.push_back(cell(est.se));
        }
        t.add(std::move(row));
        if (k + stride > n && k != n) k = n - stride;
    }
    return t;
}

int cmd_derivative(const Common& c, const std::string& route) {
    const Config cfg = load_config(c.config);
    const DerivativeConfig& dc = cfg.derivative;
    const TimeGrid grid(0.0, dc.horizon, dc.n_steps);
    const fs::path dir = prepare(c.out);
    const bool bv = !cfg.base.drift->is_smooth();
    const std::vector<double> cov = cfg.base.diffusion->covariance(0.0, dc.x);
    std::optional<DriftFunctionals> functionals;
    if (bv) functionals.emplace(cfg.base.drift->derivative_measure(), dc.functional_epsilon, dc.estimator, cov);
    const CoefficientSet smooth =
        bv ? cfg.base.with_drift(mollify_drift(cfg.base.drift, cfg.mollify_n > 0 ? cfg.mollify_n : 64)) : cfg.base;

    auto solve = [&](const std::string& which) {
        std::vector<MatrixPath> ys(dc.n_paths, MatrixPath(grid, cfg.dim));
        parallel_for(
            dc.n_paths,
            [&](std::size_t i) {
                const WienerIncrements inc = WienerIncrements::generate(grid, cfg.noise_dim, c.seed, i);
                if (which == "smooth") {
                    const PathBundle b = simulate_flow(smooth, {dc.x}, inc, c.seed, i);
                    ys[i] = solve_variational_smooth(smooth, b, 0);
                    return;
                }
                const PathBundle b = simulate_flow(cfg.base, {dc.x}, inc, c.seed, i);
                const FunctionalMatrix a = (*functionals)(b, 0);
                ys[i] = which == "bv" ? solve_variational_bv(a, *cfg.base.diffusion, b, 0)
                                      : z_transform_solve(a, *cfg.base.diffusion, b, 0).y;
            },
            c.threads);
        return ys;
    };
    auto fd = [&] {
        FdOptions o{dc.functional_epsilon, dc.estimator, 0, c.threads, dc.noise_refine};
        const auto rows = finite_difference_derivative(cfg.base, dc.x, dc.direction, dc.epsilons, grid, dc.n_paths,
                                                       dc.p, c.seed, o);
        Table t;
        t.columns = {"epsilon", "discrepancy", "se", "p", "n_paths"};
        for (const auto& r : rows)
            t.add({cell(r.epsilon), cell(r.discrepancy.mean), cell(r.discrepancy.se), cell(dc.p), cell(dc.n_paths)});
        return t;
    };

    if (route == "fd") {
        write_text(dir / "derivative_fd.csv", fd().csv());
        return 0;
    }
    if (route == "smooth" || route == "bv" || route == "ztransform") {
        if (route != "smooth" && !bv) throw ConfigError("route '" + route + "' needs a BV drift");
        write_text(dir / ("derivative_" + route + ".csv"), route_table(route, solve(route)).csv());
        return 0;
    }
    // all: terminal agreement of every route plus the finite-difference table.
    Table t;
    t.columns = {"route", "mean_Y_T_v", "se", "n_paths"};
    std::vector<std::string> routes{"smooth"};
    if (bv) routes.insert(routes.end(), {"bv", "ztransform"});
    for (const auto& r : routes) {
        const auto ys = solve(r);
        std::vector<double> v(ys.size());
        for (std::size_t p = 0; p < ys.size(); ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i < cfg.dim; ++i) {
                double yv = 0.0;
                for (std::size_t j = 0; j < cfg.dim; ++j) yv += ys[p].entry(grid.n_steps(), i, j) * dc.direction[j];
                s += yv * yv;
            }
            v[p] = std::sqrt(s);
        }
        const Estimate e = estimate(v);
        t.add({r, cell(e.mean), cell(e.se), cell(dc.n_paths)});
    }
    write_text(dir / "derivative_routes.csv", t.csv());
    write_text(dir / "derivative_fd.csv", fd().csv());
    std::cout << t.csv();
    return 0;
}

int cmd_density(const Common& c) {
    const Config cfg = load_config(c.config);
    DensityParams p = cfg.density.params;
    p.threads = c.threads;
    const DensityGrid g = zero_drift_density(*cfg.coefficients.diffusion, p);
    PerturbationResult pr = perturbed_density(g, *cfg.coefficients.diffusion, *cfg.coefficients.drift,
                                              cfg.density.iterations, c.threads);
    const fs::path dir = prepare(c.out);
    write_density(pr.density, (dir / "density").string());
    const double bmin = cfg.coefficients.ellipticity;
    const double bmax = cfg.coefficients.diffusion->max_covariance_eigenvalue();
    const EnvelopeFit env = fit_envelopes(pr.density, bmin, bmax, p.interior_margin);
    const double norm = normalization_error(pr.density, p.interior_margin);
    nlohmann::json s = {{"schema", "flowgrad.density.summary"},
                        {"schema_version", summary_schema_version},
                        {"seed", c.seed},
                        {"residuals", pr.residuals},
                        {"normalization_error", norm},
                        {"normalization_ok", norm <= p.tolerance},
                        {"clipped_mass", pr.clipped_mass},
                        {"envelope",
                         {{"c_upper", env.c_upper},
                          {"C_upper", env.C_upper},
                          {"c_lower", env.c_lower},
                          {"C_lower", env.C_lower},
                          {"c_gradient", env.c_gradient},
                          {"C_gradient", env.C_gradient},
                          {"flagged", env.flagged}}},
                        {"notes", pr.density.notes},
                        {"files", {"density.bin", "density_index.csv"}}};
    write_text(dir / "summary.json", s.dump(2) + "\n");
    return 0;
}

int cmd_kato(const Common& c) {
    const Config cfg = load_config(c.config);
    if (!cfg.measure) throw ConfigError("kato-check needs a 'measure' section");
    const KatoVerdict v = classify_kato(*cfg.measure);
    std::ostringstream verdict;
    verdict << "is_kato,dim,unit_ball_mass,witness_t0,witness_t,witness_value";
    for (std::size_t i = 0; i < v.witness_x0.size(); ++i) verdict << ",witness_x0_" << i + 1;
    verdict << '\n'
            << (v.is_kato ? "true" : "false") << ',' << v.dim << ',' << cell(v.unit_ball_mass) << ','
            << cell(v.witness_t0) << ',' << cell(v.witness_t) << ',' << cell(v.witness_value);
    for (double x : v.witness_x0) verdict << ',' << cell(x);
    verdict << '\n';
    std::ostringstream table;
    table << "epsilon,sup_value\n";
    for (std::size_t i = 0; i < v.values.size(); ++i) table << cell(v.epsilons[i]) << ',' << cell(v.values[i]) << '\n';
    std::cout << verdict.str() << '\n' << table.str();
    const fs::path dir = prepare(c.out);
    write_text(dir / "kato_verdict.csv", verdict.str());
    write_text(dir / "kato_witness.csv", table.str());
    return 0;
}

int cmd_experiment(const Common& c, const std::string& name) {
    const Config cfg = load_config(c.config);
    const ExperimentResult r = run_experiment(name, cfg, c.seed, c.threads);
    write_experiment(r, c.out);
    std::cout << r.table.csv();
    for (const auto& k : r.checks) std::cout << (k.passed ? "PASS " : "FAIL ") << k.name << ": " << k.detail << '\n';
    return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowgrad: stochastic flows with bounded-variation drift"};
    app.footer("Config schema: docs/config_schema.md. Exit codes: 0 ok, 1 failed trend check, "
               "2 invalid input, 3 numeric failure.");
    app.require_subcommand(1);

    Common common;
    std::optional<std::size_t> n_paths;
    std::string route = "all";
    std::string name;

    auto* sim = app.add_subcommand("simulate", "simulate flow paths to CSV");
    add_common(sim, common);
    sim->add_option("--n-paths", n_paths, "number of paths (overrides the config)");
    auto* der = app.add_subcommand("derivative", "derivative of the flow by one or all routes");
    add_common(der, common);
    der->add_option("--route", route, "fd | smooth | bv | ztransform | all")
        ->check(CLI::IsMember({"fd", "smooth", "bv", "ztransform", "all"}));
    auto* den = app.add_subcommand("density", "transition density on a lattice");
    add_common(den, common);
    auto* kato = app.add_subcommand("kato-check", "classify the configured measure");
    add_common(kato, common);
    auto* exp = app.add_subcommand("experiment", "run a convergence study");
    add_common(exp, common);
    exp->add_option("name", name, "experiment name")->required()->check(CLI::IsMember(experiment_names()));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (common.threads == 0) common.threads = resolve_threads(0);
        set_default_threads(common.threads);
        if (*sim) return cmd_simulate(common, n_paths);
        if (*der) return cmd_derivative(common, route);
        if (*den) return cmd_density(common);
        if (*kato) return cmd_kato(common);
        if (*exp) return cmd_experiment(common, name);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
