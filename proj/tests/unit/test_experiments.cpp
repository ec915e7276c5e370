#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "flowgrad/config.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/experiments.hpp"

using namespace flowgrad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string configs = FLOWGRAD_CONFIGS;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("flowgrad_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FLOWGRAD_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Config small_bm() {
    json doc = json::parse(R"({"schema_version": 1, "dim": 1, "bound_R": 10,
        "drift": {"type": "sign1d", "kappa": 0.5}, "diffusion": {"type": "identity"},
        "experiment": {"n_paths": 64, "n_steps": 256}})");
    return parse_config(doc);
}

}  // namespace

TEST_CASE("experiment reruns are byte-identical") {
    const Config c = small_bm();
    const ExperimentResult a = run_experiment("exp-moments", c, 5, 1);
    const ExperimentResult b = run_experiment("exp-moments", c, 5, 3);
    CHECK(a.table.csv() == b.table.csv());
    CHECK(a.summary(false).dump() == b.summary(false).dump());
    CHECK(run_experiment("exp-moments", c, 6, 1).table.csv() != a.table.csv());

    const fs::path out = scratch("experiments");
    write_experiment(a, out.string());
    const fs::path dir = out / "exp-moments" / "5";
    CHECK(slurp(dir / "table.csv") == a.table.csv());
    const json s = json::parse(slurp(dir / "summary.json"));
    CHECK(s["schema"] == "flowgrad.experiment.summary");
    CHECK(s["schema_version"] == 1);
    CHECK(s.contains("metadata"));
    fs::remove_all(out);
}

TEST_CASE("kato suite verdicts") {
    const Config c = parse_config(json::parse(R"({"schema_version": 1, "dim": 1, "bound_R": 10, "drift": {"type": "zero"},
        "diffusion": {"type": "identity"}})"));
    const ExperimentResult r = run_experiment("kato-suite", c, 1);
    CHECK(r.passed());
    CHECK(r.table.rows.size() >= 5);
}

TEST_CASE("experiment parameters are validated") {
    json doc = json::parse(R"({"schema_version": 1, "dim": 1, "bound_R": 10, "drift": {"type": "sign1d", "kappa": 0.5},
        "diffusion": {"type": "identity"}, "experiment": {"n_pathz": 3}})");
    const Config c = parse_config(doc);
    CHECK_THROWS_AS(run_experiment("exp-moments", c, 1), ConfigError);
    CHECK_THROWS_AS(run_experiment("no-such-study", c, 1), ConfigError);
    CHECK(experiment_names().size() == 6);
}

TEST_CASE("cli exit codes") {
    const fs::path out = scratch("cli");
    const std::string o = " --out " + out.string();
    CHECK(run_cli("kato-check --config " + configs + "/delta1d.json" + o) == 0);
    const std::string verdict = slurp(out / "kato_verdict.csv");
    CHECK(verdict.find("true") != std::string::npos);
    CHECK(run_cli("kato-check --config " + configs + "/delta2d.json" + o) == 0);
    CHECK(slurp(out / "kato_verdict.csv").find("false") != std::string::npos);

    CHECK(run_cli("kato-check --config /nonexistent.json" + o) == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("experiment no-such-study --config " + configs + "/delta1d.json" + o) == 2);

    {
        std::ofstream bad(out / "bad.json");
        bad << R"({"schema_version": 1, "dim": 1, "drift": {"type": "zero"}, "diffusion": {"type": "identity"},
                   "surprise": true})";
    }
    CHECK(run_cli("simulate --config " + (out / "bad.json").string() + o) == 2);

    CHECK(run_cli("simulate --config " + configs + "/sign1d.json" + o) == 0);
    CHECK(fs::exists(out / "trajectories.csv"));
    CHECK(run_cli("derivative --route all --config " + configs + "/sign1d.json" + o) == 0);
    CHECK(fs::exists(out / "derivative_routes.csv"));
    CHECK(fs::exists(out / "derivative_fd.csv"));
    fs::remove_all(out);
}
