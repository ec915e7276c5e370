#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/functionals.hpp"
#include "flowgrad/measure_types.hpp"
#include "flowgrad/parametrix.hpp"

namespace flowgrad {

inline constexpr int config_schema_version = 1;

struct SimulationConfig {
    double t0 = 0.0;
    double horizon = 1.0;
    std::size_t n_steps = 1024;
    std::size_t n_paths = 1;
    std::vector<std::vector<double>> starts;
};

struct DerivativeConfig {
    std::vector<double> x;
    std::vector<double> direction;
    std::vector<double> epsilons{1e-1, 1e-2, 1e-3};
    double p = 2.0;
    std::size_t n_paths = 1000;
    std::size_t n_steps = 4096;
    double horizon = 1.0;
    double functional_epsilon = 0.0125;
    Estimator estimator = Estimator::Band;
    std::size_t noise_refine = 1;
};

struct DensityConfig {
    DensityParams params;
    std::size_t iterations = 6;
    std::vector<double> start;
};

/// A parsed and validated configuration document.
struct Config {
    int schema_version = config_schema_version;
    std::size_t dim = 1;
    std::size_t noise_dim = 1;
    double bound_radius = 10.0;
    int mollify_n = 0;
    /// Coefficients exactly as described by `drift` and `diffusion`.
    CoefficientSet base;
    /// `base` with its drift mollified at level `mollify_n` (equal to base when 0).
    CoefficientSet coefficients;
    std::optional<SpaceTimeMeasure> measure;
    SimulationConfig simulation;
    DerivativeConfig derivative;
    DensityConfig density;
    /// Free-form per-experiment parameters, validated by the experiment.
    nlohmann::json experiment = nlohmann::json::object();
};

/// Throws ConfigError for unknown keys, missing fields or invalid values.
Config parse_config(const nlohmann::json& doc);
Config load_config(const std::string& path);

CoefficientSet build_coefficients(const nlohmann::json& doc);
SpaceTimeMeasure parse_measure(const nlohmann::json& spec, std::size_t dim);

/// Throws ConfigError naming the first key of `obj` outside `allowed`.
void require_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed, const std::string& context);

}  // namespace flowgrad
