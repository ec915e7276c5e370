#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/gaussian.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/parametrix.hpp"

using namespace flowgrad;

namespace {

DensityParams coarse(double L = 3.0, double dx = 0.05, std::size_t n_times = 4, double margin = 1.0) {
    DensityParams p;
    p.half_width = L;
    p.spacing = dx;
    p.horizon = 0.5;
    p.n_times = n_times;
    p.interior_margin = margin;
    return p;
}

}  // namespace

TEST_CASE("lattice geometry") {
    const Lattice l = Lattice::make(2, 1.0, 0.25);
    CHECK(l.per_axis == 9);
    CHECK(l.size() == 81);
    CHECK(l.cell_volume() == 0.0625);
    const std::vector<double> p = l.point(10);
    CHECK(p[0] == -0.75);
    CHECK(p[1] == -0.75);
    CHECK(l.nearest(std::vector<double>{-0.74, -0.8}) == 10);
    CHECK(l.nearest(std::vector<double>{2.0, 0.0}) == l.size());
    CHECK_THROWS_AS(Lattice::make(3, 1.0, 0.1), ConfigError);
    CHECK_THROWS_AS(Lattice::make(1, 1.0, 0.3), ConfigError);
}

TEST_CASE("identity diffusion gives the gaussian kernel") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    const DensityGrid g = zero_drift_density(id, coarse());
    const Lattice& l = g.lattice;
    for (std::size_t ti = 0; ti < g.times.size(); ++ti)
        for (std::size_t xi = 0; xi < l.size(); xi += 7)
            for (std::size_t yi = 0; yi < l.size(); yi += 5)
                CHECK(g.at(ti, xi, yi) == gaussian_kernel(0.0, l.point(xi), g.times[ti], l.point(yi)));
}

TEST_CASE("lattice mass of the gaussian") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    DensityParams p;
    p.half_width = 8.0;
    p.spacing = 0.01;
    p.horizon = 1.0;
    p.n_times = 1;
    const DensityGrid g = zero_drift_density(id, p);
    const std::size_t mid = g.lattice.nearest(std::vector<double>{0.0});
    CHECK(std::fabs(g.mass(0, mid) - 1.0) <= 1e-6);
}

TEST_CASE("variable diffusion kernel is normalized") {
    const DiffusionSpec bump(1, 1, diffusion::DiagonalBump{{1.0}, 0.2, {0.0}, 1.0});
    const DensityGrid g = zero_drift_density(bump, coarse(4.0, 0.05, 4, 2.0));
    CHECK(normalization_error(g, 2.0) <= 1e-3);
    for (double v : g.values) CHECK(v >= 0.0);
}

TEST_CASE("chapman kolmogorov on a coarse lattice") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    const DensityGrid g = zero_drift_density(id, coarse(4.0, 0.05, 4, 2.0));
    CHECK(chapman_kolmogorov_deviation(g, 0, 1, 2.0) <= 5e-3);
    CHECK(chapman_kolmogorov_deviation(g, 1, 1, 2.0) <= 5e-3);
    const DiffusionSpec bump(1, 1, diffusion::DiagonalBump{{1.0}, 0.2, {0.0}, 1.0});
    CHECK(chapman_kolmogorov_deviation(zero_drift_density(bump, coarse(4.0, 0.05, 4, 2.0)), 0, 1, 2.0) <= 5e-3);
}

TEST_CASE("zero drift perturbation is exact") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    const DriftSpec zero(1, 10.0, drift::Zero{});
    const DensityGrid g = zero_drift_density(id, coarse());
    const PerturbationResult r = perturbed_density(g, id, zero, 3);
    CHECK(r.density.values == g.values);
    for (double v : r.residuals) CHECK(v == 0.0);
    CHECK(r.residual(3) == 0.0);
}

TEST_CASE("picard residuals decay for a smooth drift") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    auto sign = std::make_shared<const DriftSpec>(1, 4.0, drift::Sign{0.5});
    const auto drift = mollify_drift(sign, 8);
    const DensityGrid g = zero_drift_density(id, coarse(4.0, 0.05, 8, 2.0));
    const PerturbationResult r = perturbed_density(g, id, *drift, 6);
    REQUIRE(r.residuals.size() == 7);
    CHECK(r.residual(6) < 0.2 * r.residual(3));
    CHECK(normalization_error(r.density, 2.0) <= 1e-2);
    const EnvelopeFit fit = fit_envelopes(r.density, 1.0, 1.0, 2.0);
    CHECK(fit.C_upper > 0.0);
    CHECK(std::isfinite(fit.C_upper));
    CHECK(std::isfinite(fit.C_gradient));
    CHECK(fit.c_upper == 0.25);
}

TEST_CASE("convergence report") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    const DensityGrid g = zero_drift_density(id, coarse());
    const std::vector<ConvergenceRow> rows = density_convergence_report({g, g, g}, {4, 16, 64}, g, 0.1, 1.0);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.sup_restricted == 0.0);
        CHECK(r.sup_all == 0.0);
    }
    CHECK(rows[1].n == 16);
}

TEST_CASE("interpolated bin masses") {
    const DiffusionSpec id(1, 1, diffusion::Identity{});
    const DensityGrid g = zero_drift_density(id, coarse(6.0, 0.02, 2, 2.0));
    const std::size_t mid = g.lattice.nearest(std::vector<double>{0.0});
    const std::vector<double> bins = bin_masses(g, 1, mid, -3.0, 3.0, 60);
    double total = 0.0;
    for (double b : bins) total += b;
    // Oracle: Φ(3/√t) - Φ(-3/√t) at t = 0.5.
    CHECK(total == doctest::Approx(std::erf(3.0 / std::sqrt(2.0 * 0.5))).epsilon(1e-4));
    CHECK(interpolated_mass(g, 1, mid, 0.0, 1.0) ==
          doctest::Approx(0.5 * std::erf(1.0 / std::sqrt(2.0 * 0.5))).epsilon(1e-4));
}

TEST_CASE("density files round trip") {
    const DiffusionSpec id(2, 2, diffusion::Identity{});
    DensityParams p = coarse(1.0, 0.25, 2, 0.5);
    const DensityGrid g = zero_drift_density(id, p);
    const auto dir = std::filesystem::temp_directory_path() / "flowgrad_density_test";
    std::filesystem::create_directories(dir);
    const std::string stem = (dir / "density").string();
    write_density(g, stem);
    const DensityGrid r = read_density(stem);
    CHECK(r.values == g.values);
    CHECK(r.times == g.times);
    CHECK(r.lattice.per_axis == g.lattice.per_axis);
    CHECK(r.lattice.dim == 2);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(read_density(stem), ConfigError);
}
