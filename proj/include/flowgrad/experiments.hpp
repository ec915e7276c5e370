#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "flowgrad/config.hpp"

namespace flowgrad {

inline constexpr int summary_schema_version = 1;

/// Column-named CSV table; numeric cells are written with %.17g.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
    std::string csv() const;
};

std::string cell(double v);
std::string cell(std::size_t v);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ExperimentResult {
    std::string name;
    std::uint64_t seed = 0;
    Table table;
    std::vector<Check> checks;
    nlohmann::json metrics = nlohmann::json::object();

    bool passed() const noexcept;
    /// Versioned summary; the timestamp sits under "metadata" only.
    nlohmann::json summary(bool with_timestamp = true) const;
};

const std::vector<std::string>& experiment_names();

/// Runs one study. Parameters come from `config.experiment` (unknown keys
/// are a ConfigError); the defaults reproduce the desk-scale studies.
ExperimentResult run_experiment(const std::string& name, const Config& config, std::uint64_t seed,
                                std::size_t threads = 0);

/// Writes `<out>/<name>/<seed>/table.csv` and `summary.json`.
void write_experiment(const ExperimentResult& result, const std::string& out_dir);

}  // namespace flowgrad
