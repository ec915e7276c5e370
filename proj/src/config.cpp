#include "flowgrad/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flowgrad/error.hpp"
#include "flowgrad/mollify.hpp"

namespace flowgrad {

using nlohmann::json;

namespace {

double number(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(ctx + ": '" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(ctx + ": '" + key + "' must be finite");
    return x;
}

double number_or(const json& obj, const char* key, double fallback, const std::string& ctx) {
    return obj.contains(key) ? number(obj, key, ctx) : fallback;
}

std::size_t count_or(const json& obj, const char* key, std::size_t fallback, const std::string& ctx) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(ctx + ": '" + key + "' must be a nonnegative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

std::vector<double> vec(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(ctx + ": '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(ctx + ": '" + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
        if (!std::isfinite(out.back())) throw ConfigError(ctx + ": '" + key + "' entries must be finite");
    }
    return out;
}

std::vector<double> vec_of_size(const json& obj, const char* key, std::size_t n, const std::string& ctx) {
    std::vector<double> v = vec(obj, key, ctx);
    if (v.size() != n) throw ConfigError(ctx + ": '" + key + "' must have " + std::to_string(n) + " entries");
    return v;
}

std::string type_of(const json& obj, const std::string& ctx) {
    if (!obj.is_object()) throw ConfigError(ctx + " must be an object");
    if (!obj.contains("type") || !obj.at("type").is_string()) throw ConfigError(ctx + ": missing string 'type'");
    return obj.at("type").get<std::string>();
}

std::shared_ptr<const DriftSpec> parse_drift(const json& j, std::size_t d, double radius) {
    const std::string ctx = "drift";
    const std::string type = type_of(j, ctx);
    DriftParams params;
    if (type == "zero") {
        require_keys(j, {"type"}, ctx);
        params = drift::Zero{};
    } else if (type == "constant") {
        require_keys(j, {"type", "value"}, ctx);
        params = drift::Constant{vec_of_size(j, "value", d, ctx)};
    } else if (type == "linear") {
        require_keys(j, {"type", "alpha"}, ctx);
        std::vector<double> a = vec(j, "alpha", ctx);
        if (a.size() == 1 && d > 1) {
            const double s = a[0];
            a.assign(d * d, 0.0);
            for (std::size_t i = 0; i < d; ++i) a[i * d + i] = s;
        }
        params = drift::Linear{std::move(a)};
    } else if (type == "sign1d") {
        require_keys(j, {"type", "kappa"}, ctx);
        params = drift::Sign{number(j, "kappa", ctx)};
    } else if (type == "hyperplane") {
        require_keys(j, {"type", "normal", "offset", "jump"}, ctx);
        params = drift::Hyperplane{vec_of_size(j, "normal", d, ctx), number_or(j, "offset", 0.0, ctx),
                                   vec_of_size(j, "jump", d, ctx)};
    } else if (type == "bump") {
        require_keys(j, {"type", "amplitude", "center", "radius"}, ctx);
        params = drift::Bump{vec_of_size(j, "amplitude", d, ctx), vec_of_size(j, "center", d, ctx),
                             number(j, "radius", ctx)};
    } else {
        throw ConfigError("unknown drift type '" + type + "'");
    }
    return std::make_shared<const DriftSpec>(d, radius, std::move(params));
}

std::shared_ptr<const DiffusionSpec> parse_diffusion(const json& j, std::size_t d, std::size_t m) {
    const std::string ctx = "diffusion";
    const std::string type = type_of(j, ctx);
    DiffusionParams params;
    if (type == "identity") {
        require_keys(j, {"type"}, ctx);
        params = diffusion::Identity{};
    } else if (type == "constant") {
        require_keys(j, {"type", "matrix"}, ctx);
        params = diffusion::Constant{vec_of_size(j, "matrix", d * m, ctx)};
    } else if (type == "diagonal_bump") {
        require_keys(j, {"type", "scale", "amplitude", "center", "radius"}, ctx);
        params = diffusion::DiagonalBump{vec_of_size(j, "scale", d, ctx), number(j, "amplitude", ctx),
                                         vec_of_size(j, "center", d, ctx), number(j, "radius", ctx)};
    } else {
        throw ConfigError("unknown diffusion type '" + type + "'");
    }
    return std::make_shared<const DiffusionSpec>(d, m, std::move(params));
}

std::vector<std::vector<double>> points(const json& obj, const char* key, std::size_t d, const std::string& ctx) {
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(ctx + ": '" + key + "' must be a nonempty array of points");
    std::vector<std::vector<double>> out;
    for (const auto& p : v) {
        json wrap = {{"p", p}};
        out.push_back(vec_of_size(wrap, "p", d, ctx + "." + key));
    }
    return out;
}

Estimator parse_estimator(const json& obj, const std::string& ctx) {
    if (!obj.contains("estimator")) return Estimator::Band;
    const std::string s = obj.at("estimator").is_string() ? obj.at("estimator").get<std::string>() : "";
    if (s == "band") return Estimator::Band;
    if (s == "characteristic") return Estimator::Characteristic;
    throw ConfigError(ctx + ": estimator must be 'band' or 'characteristic'");
}

}  // namespace

void require_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(context + ": unknown key '" + key + "'");
}

SpaceTimeMeasure parse_measure(const json& spec, std::size_t d) {
    const std::string ctx = "measure";
    require_keys(spec, {"atoms", "hyperplanes", "densities"}, ctx);
    SpaceTimeMeasure mu(d);
    if (spec.contains("atoms")) {
        if (!spec.at("atoms").is_array()) throw ConfigError("measure.atoms must be an array");
        for (const auto& a : spec.at("atoms")) {
            require_keys(a, {"location", "weight"}, "measure.atoms[]");
            mu.add_atom({vec_of_size(a, "location", d, "measure.atoms[]"), number(a, "weight", "measure.atoms[]")});
        }
    }
    if (spec.contains("hyperplanes")) {
        if (!spec.at("hyperplanes").is_array()) throw ConfigError("measure.hyperplanes must be an array");
        for (const auto& p : spec.at("hyperplanes")) {
            const std::string c = "measure.hyperplanes[]";
            require_keys(p, {"normal", "offset", "weight"}, c);
            HyperplaneAtom h;
            h.normal = vec_of_size(p, "normal", d, c);
            h.offset = number_or(p, "offset", 0.0, c);
            h.weight = number(p, "weight", c);
            mu.add_hyperplane(std::move(h));
        }
    }
    if (spec.contains("densities")) {
        if (!spec.at("densities").is_array()) throw ConfigError("measure.densities must be an array");
        for (const auto& q : spec.at("densities")) {
            const std::string c = "measure.densities[]";
            const std::string type = type_of(q, c);
            if (type == "constant_ball") {
                require_keys(q, {"type", "value", "radius"}, c);
                mu.add_density(constant_ball_density(d, number(q, "value", c), number(q, "radius", c)));
            } else if (type == "gaussian") {
                require_keys(q, {"type", "center", "amplitude", "width"}, c);
                mu.add_density(gaussian_density(vec_of_size(q, "center", d, c), number(q, "amplitude", c),
                                                number(q, "width", c)));
            } else if (type == "bump") {
                require_keys(q, {"type", "center", "amplitude", "radius"}, c);
                mu.add_density(bump_density(vec_of_size(q, "center", d, c), number(q, "amplitude", c),
                                            number(q, "radius", c)));
            } else {
                throw ConfigError("unknown density type '" + type + "'");
            }
        }
    }
    return mu;
}

CoefficientSet build_coefficients(const json& doc) {
    const std::size_t d = count_or(doc, "dim", 0, "config");
    const std::size_t m = count_or(doc, "noise_dim", d, "config");
    if (d == 0 || m == 0) throw ConfigError("config: dim and noise_dim must be >= 1");
    const double radius = number(doc, "bound_R", "config");
    if (!doc.contains("drift")) throw ConfigError("config: missing 'drift'");
    if (!doc.contains("diffusion")) throw ConfigError("config: missing 'diffusion'");
    auto drift = parse_drift(doc.at("drift"), d, radius);
    auto diff = parse_diffusion(doc.at("diffusion"), d, m);
    return make_coefficients(std::move(drift), std::move(diff), number_or(doc, "ellipticity", 0.0, "config"));
}

Config parse_config(const json& doc) {
    require_keys(doc,
                 {"schema_version", "dim", "noise_dim", "bound_R", "drift", "mollify_n", "diffusion", "ellipticity",
                  "measure", "simulation", "derivative", "density", "experiment", "description"},
                 "config");
    Config c;
    if (doc.contains("schema_version")) {
        if (!doc.at("schema_version").is_number_integer() ||
            doc.at("schema_version").get<int>() != config_schema_version)
            throw ConfigError("config: unsupported schema_version (expected " +
                              std::to_string(config_schema_version) + ")");
    }
    if (doc.contains("description") && !doc.at("description").is_string())
        throw ConfigError("config: description must be a string");
    c.base = build_coefficients(doc);
    c.dim = c.base.dim;
    c.noise_dim = c.base.noise_dim;
    c.bound_radius = c.base.bound_radius;
    c.mollify_n = static_cast<int>(count_or(doc, "mollify_n", 0, "config"));
    c.coefficients = c.mollify_n > 0 ? c.base.with_drift(mollify_drift(c.base.drift, c.mollify_n)) : c.base;
    const std::size_t d = c.dim;

    if (doc.contains("measure")) c.measure = parse_measure(doc.at("measure"), d);

    c.simulation.starts = {std::vector<double>(d, 0.0)};
    if (doc.contains("simulation")) {
        const json& s = doc.at("simulation");
        const std::string ctx = "simulation";
        require_keys(s, {"t0", "horizon", "n_steps", "n_paths", "starts"}, ctx);
        c.simulation.t0 = number_or(s, "t0", 0.0, ctx);
        c.simulation.horizon = number_or(s, "horizon", 1.0, ctx);
        c.simulation.n_steps = count_or(s, "n_steps", c.simulation.n_steps, ctx);
        c.simulation.n_paths = count_or(s, "n_paths", c.simulation.n_paths, ctx);
        if (s.contains("starts")) c.simulation.starts = points(s, "starts", d, ctx);
        if (c.simulation.n_paths == 0) throw ConfigError("simulation: n_paths must be >= 1");
        TimeGrid(c.simulation.t0, c.simulation.horizon, c.simulation.n_steps);
    }

    c.derivative.x.assign(d, 0.0);
    c.derivative.direction.assign(d, 0.0);
    c.derivative.direction[0] = 1.0;
    if (doc.contains("derivative")) {
        const json& s = doc.at("derivative");
        const std::string ctx = "derivative";
        require_keys(s,
                     {"x", "direction", "epsilons", "p", "n_paths", "n_steps", "horizon", "functional_epsilon",
                      "estimator", "noise_refine"},
                     ctx);
        if (s.contains("x")) c.derivative.x = vec_of_size(s, "x", d, ctx);
        if (s.contains("direction")) c.derivative.direction = vec_of_size(s, "direction", d, ctx);
        if (s.contains("epsilons")) c.derivative.epsilons = vec(s, "epsilons", ctx);
        c.derivative.p = number_or(s, "p", c.derivative.p, ctx);
        c.derivative.n_paths = count_or(s, "n_paths", c.derivative.n_paths, ctx);
        c.derivative.n_steps = count_or(s, "n_steps", c.derivative.n_steps, ctx);
        c.derivative.horizon = number_or(s, "horizon", c.derivative.horizon, ctx);
        c.derivative.functional_epsilon = number_or(s, "functional_epsilon", c.derivative.functional_epsilon, ctx);
        c.derivative.estimator = parse_estimator(s, ctx);
        c.derivative.noise_refine = count_or(s, "noise_refine", c.derivative.noise_refine, ctx);
        if (!(c.derivative.p > 0.0) || c.derivative.n_paths == 0 || c.derivative.n_steps == 0 ||
            !(c.derivative.functional_epsilon > 0.0) || c.derivative.noise_refine == 0)
            throw ConfigError("derivative: p, n_paths, n_steps, functional_epsilon and noise_refine must be positive");
    }

    c.density.start.assign(d, 0.0);
    if (doc.contains("density")) {
        const json& s = doc.at("density");
        const std::string ctx = "density";
        require_keys(s,
                     {"half_width", "spacing", "horizon", "n_times", "iterations", "tolerance", "interior_margin",
                      "start"},
                     ctx);
        DensityParams& p = c.density.params;
        p.half_width = number_or(s, "half_width", p.half_width, ctx);
        p.spacing = number_or(s, "spacing", p.spacing, ctx);
        p.horizon = number_or(s, "horizon", p.horizon, ctx);
        p.n_times = count_or(s, "n_times", p.n_times, ctx);
        p.tolerance = number_or(s, "tolerance", p.tolerance, ctx);
        p.interior_margin = number_or(s, "interior_margin", p.interior_margin, ctx);
        c.density.iterations = count_or(s, "iterations", c.density.iterations, ctx);
        if (s.contains("start")) c.density.start = vec_of_size(s, "start", d, ctx);
        if (p.n_times == 0 || c.density.iterations == 0 || !(p.tolerance > 0.0) || !(p.interior_margin >= 0.0))
            throw ConfigError("density: n_times, iterations and tolerance must be positive");
        Lattice::make(d, p.half_width, p.spacing);
    }

    if (doc.contains("experiment")) {
        if (!doc.at("experiment").is_object()) throw ConfigError("experiment must be an object");
        c.experiment = doc.at("experiment");
    }
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

}  // namespace flowgrad
