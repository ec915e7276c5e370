#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/functionals.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/rng.hpp"
#include "flowgrad/simulate.hpp"
#include "flowgrad/stats.hpp"

using namespace flowgrad;

namespace {

CoefficientSet make1(DriftParams p, DiffusionParams s = diffusion::Identity{}) {
    return make_coefficients(std::make_shared<const DriftSpec>(1, 10.0, std::move(p)),
                             std::make_shared<const DiffusionSpec>(1, 1, std::move(s)));
}

const std::vector<std::vector<double>> origin{{0.0}};

}  // namespace

TEST_CASE("zero drift reproduces the partial sums") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 256);
    const PathBundle b = simulate_flow(c, origin, g, 11, 5);
    double w = 0.0;
    for (std::size_t k = 0; k < g.n_steps(); ++k) {
        w += b.increments.row(k)[0];
        CHECK(b.state(0, k + 1) == w);
    }
    const NormalStream s(11, 5);
    CHECK(b.increments.row(3)[0] == std::sqrt(g.step()) * s.at(3));
}

TEST_CASE("noise-free linear flow is the Euler product") {
    const CoefficientSet c = make1(drift::Linear{{0.3}});
    const TimeGrid g(0.0, 1.0, 64);
    const PathBundle b = simulate_flow(c, {{1.0}}, WienerIncrements::zeros(g, 1));
    double x = 1.0;
    for (std::size_t k = 0; k < g.n_steps(); ++k) {
        x += 0.3 * x * g.step();
        CHECK(b.state(0, k + 1) == doctest::Approx(x).epsilon(1e-15));
    }
}

TEST_CASE("restarting from a stored state is bit-exact") {
    const CoefficientSet c = make1(drift::Sign{0.5});
    const TimeGrid g(0.0, 1.0, 512);
    const WienerIncrements inc = WienerIncrements::generate(g, 1, 3, 9);
    const PathBundle full = simulate_flow(c, {{0.3}}, inc);
    const std::size_t k0 = 200;
    const PathBundle tail = simulate_flow(c, {{full.state(0, k0)}}, inc.slice(k0, g.n_steps() - k0));
    for (std::size_t k = 0; k + k0 <= g.n_steps(); ++k) CHECK(tail.state(0, k) == full.state(0, k0 + k));
    const WienerIncrements late = WienerIncrements::generate(g.slice(k0, 100), 1, 3, 9, k0);
    for (std::size_t k = 0; k < 100; ++k) CHECK(late.row(k)[0] == inc.row(k0 + k)[0]);
}

TEST_CASE("coarsened increments sum fine increments") {
    const TimeGrid g(0.0, 1.0, 16);
    const WienerIncrements fine = WienerIncrements::generate(g.refined(4), 2, 1, 2);
    const WienerIncrements coarse = fine.coarsened(4);
    CHECK(coarse.grid() == g);
    for (std::size_t k = 0; k < 16; ++k)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < 4; ++r) s += fine.row(4 * k + r)[j];
            CHECK(coarse.row(k)[j] == doctest::Approx(s).epsilon(1e-15));
        }
}

TEST_CASE("strong error") {
    const TimeGrid g(0.0, 1.0, 256);
    const std::vector<double> x{0.0};
    const CoefficientSet sign = make1(drift::Sign{0.5});
    CHECK(strong_error(sign, sign, x, g, 50, 2.0, 1).mean == 0.0);

    const CoefficientSet a = make1(drift::Zero{}, diffusion::Constant{{1.0}});
    const CoefficientSet b = make1(drift::Zero{}, diffusion::Constant{{1.1}});
    const Estimate e = strong_error(a, b, x, g, 400, 2.0, 4);
    // Oracle: the difference path is 0.1 W, so compare against sup W² on the same substreams.
    std::vector<double> sup(400);
    for (std::size_t i = 0; i < 400; ++i) {
        const WienerIncrements inc = WienerIncrements::generate(g, 1, 4, i);
        double w = 0.0, m = 0.0;
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
            w += inc.row(k)[0];
            m = std::max(m, w * w);
        }
        sup[i] = m;
    }
    CHECK(e.mean == doctest::Approx(0.01 * estimate(sup).mean).epsilon(1e-10));

    const CoefficientSet n4 = sign.with_drift(mollify_drift(sign.drift, 4));
    const CoefficientSet n64 = sign.with_drift(mollify_drift(sign.drift, 64));
    const TimeGrid fine(0.0, 1.0, 1024);
    CHECK(strong_error(sign, n64, x, fine, 200, 2.0, 5).mean < strong_error(sign, n4, x, fine, 200, 2.0, 5).mean);
}

TEST_CASE("sign drift mean agrees with a finer-step oracle") {
    const CoefficientSet c = make1(drift::Sign{0.5});
    auto run = [&](std::size_t n_steps, std::size_t paths, std::uint64_t seed) {
        const TimeGrid g(0.0, 1.0, n_steps);
        return estimate(monte_carlo_samples(paths, [&](std::uint64_t id) {
            return simulate_flow(c, origin, g, seed, id).state(0, n_steps);
        }));
    };
    const Estimate coarse = run(4096, 10000, 21);
    const Estimate fine = run(65536, 2000, 22);
    CHECK(std::fabs(coarse.mean - fine.mean) <= 3.0 * std::hypot(coarse.se, fine.se));
}

TEST_CASE("integral functionals") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 128);
    const PathBundle b = simulate_flow(c, origin, g, 2, 0);
    const FunctionalPath one = integral_functional([](double, std::span<const double>) { return 1.0; }, b);
    for (std::size_t k = 0; k <= g.n_steps(); ++k) CHECK(one.value(k) == doctest::Approx(g.node(k)).epsilon(1e-14));
    const FunctionalPath zero = integral_functional([](double, std::span<const double>) { return 0.0; }, b);
    CHECK(zero.terminal() == 0.0);
    CHECK(zero.max_increment() == 0.0);
}

TEST_CASE("integral functional converges under path refinement") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 256);
    const PathIntegrand sq = [](double, std::span<const double> y) { return y[0] * y[0]; };
    RunningStats diff;
    for (std::uint64_t id = 0; id < 200; ++id) {
        // Oracle: the same Brownian path resolved 16 times finer.
        const WienerIncrements fine_inc = WienerIncrements::generate(g.refined(16), 1, 8, id);
        const PathBundle fine = simulate_flow(c, origin, fine_inc);
        const PathBundle coarse = simulate_flow(c, origin, fine_inc.coarsened(16));
        diff.push(std::fabs(integral_functional(sq, coarse).terminal() - integral_functional(sq, fine).terminal()));
    }
    CHECK(diff.mean() < 2.0 * g.step());
}

TEST_CASE("additivity at grid nodes") {
    const CoefficientSet c = make1(drift::Sign{0.5});
    const TimeGrid g(0.0, 1.0, 200);
    const PathIntegrand h = [](double t, std::span<const double> y) { return std::sin(3.0 * y[0]) + t; };
    for (std::uint64_t id = 0; id < 100; ++id) {
        const WienerIncrements inc = WienerIncrements::generate(g, 1, 6, id);
        const PathBundle full = simulate_flow(c, origin, inc);
        const std::size_t k0 = 37 + id;
        const PathBundle shifted = simulate_flow(c, {{full.state(0, k0)}}, inc.slice(k0, g.n_steps() - k0));
        const FunctionalPath a = integral_functional(h, full), s = integral_functional(h, shifted);
        for (std::size_t k = 0; k + k0 <= g.n_steps(); ++k)
            CHECK(std::fabs(a.value(k0 + k) - a.value(k0) - s.value(k)) <= 1e-12);
    }
}

TEST_CASE("local time bands") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 100);
    const PathBundle still = simulate_flow(c, origin, WienerIncrements::zeros(g, 1));
    CHECK(local_time_1d(still, 0, 1.0, 0.1).terminal() == 0.0);
    CHECK(local_time_1d(still, 0, 0.0, 0.25).terminal() == doctest::Approx(1.0 / 0.5).epsilon(1e-14));
    CHECK(local_time_1d(still, 0, 0.0, 0.25).value(50) == doctest::Approx(0.5 / 0.5).epsilon(1e-14));
}

TEST_CASE("w functional of the jump measure is twice kappa times local time") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 1024);
    SpaceTimeMeasure m(1);
    m.add_atom({{0.0}, 1.0});
    const WFunctional w(m, 0.05);
    RunningStats diff;
    for (std::uint64_t id = 0; id < 50; ++id) {
        const PathBundle b = simulate_flow(c, origin, g, 3, id);
        diff.push(w(b).terminal() - local_time_1d(b, 0, 0.0, 0.05).terminal());
    }
    CHECK(std::fabs(diff.mean()) <= 1e-12);
    CHECK(WFunctional(SpaceTimeMeasure(1), 0.05)(simulate_flow(c, origin, g, 3, 0)).terminal() == 0.0);

    const WFunctional neg(m.scaled(-1.0), 0.05);
    const PathBundle b = simulate_flow(c, origin, g, 3, 1);
    CHECK(neg(b).terminal() == doctest::Approx(-w(b).terminal()));
    CHECK(neg(b).minus().back() == doctest::Approx(w(b).plus().back()));

    SpaceTimeMeasure bad(2);
    bad.add_atom({{0.0, 0.0}, 1.0});
    CHECK_THROWS_AS(WFunctional(bad, 0.05), ConfigError);
}

TEST_CASE("w functional of a density") {
    const CoefficientSet c = make1(drift::Zero{});
    const TimeGrid g(0.0, 1.0, 512);
    SpaceTimeMeasure m(1);
    m.add_density(gaussian_density({0.2}, 1.5, 0.5));
    const PathIntegrand h = [&](double, std::span<const double> y) { return m.density_at(y); };
    std::vector<double> gaps;
    for (double eps : {0.2, 0.1, 0.05}) {
        double gap = 0.0;
        for (std::uint64_t id = 0; id < 20; ++id) {
            const PathBundle b = simulate_flow(c, origin, g, 4, id);
            const double exact = integral_functional(h, b).terminal();
            CHECK(WFunctional(m, eps)(b).terminal() == doctest::Approx(exact).epsilon(1e-12));
            gap += std::fabs(WFunctional(m, eps, Estimator::Characteristic)(b).terminal() - exact);
        }
        gaps.push_back(gap);
    }
    CHECK(gaps[1] < gaps[0]);
    CHECK(gaps[2] < gaps[1]);
}

TEST_CASE("characteristics") {
    const std::vector<double> x0{0.0}, far{10.0};
    SpaceTimeMeasure one(1);
    one.add_density(constant_ball_density(1, 1.0, 30.0));
    CHECK(characteristic_of(one, {}, 0.0, x0, 0.7) == doctest::Approx(0.7).epsilon(1e-8));
    SpaceTimeMeasure d0(1);
    d0.add_atom({{0.0}, 1.0});
    CHECK(characteristic_of(d0, {}, 0.0, x0, 1.0) == doctest::Approx(0.797884560802865356).epsilon(1e-12));
    CHECK(characteristic_of(d0, {}, 0.0, far, 1.0) < 1e-8);
}

TEST_CASE("exponential moments") {
    const std::vector<double> zeros(10, 0.0);
    const Estimate e0 = exp_moment_estimate(zeros, 3.0);
    CHECK(e0.mean == 1.0);
    CHECK(e0.se == 0.0);
    const std::vector<double> ones(5, 1.0);
    CHECK(exp_moment_estimate(ones, 1.0).mean == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    const std::vector<double> huge{800.0};
    CHECK_THROWS_AS(exp_moment_estimate(huge, 1.0), NumericError);
}

TEST_CASE("mollified local time has the smeared mean") {
    // Oracle: ∫ ω_4(y) E L_1^y dy with E L_1^y = 2φ(y) + y(2Φ(y) - 1) - |y|, by quadrature.
    const double expected = 0.718206588023488;
    const CoefficientSet c = make1(drift::Zero{});
    SpaceTimeMeasure delta(1);
    delta.add_atom({{0.0}, 1.0});
    const DensityPart dens = mollify_measure_to_density(delta, 4);
    const TimeGrid g(0.0, 1.0, 4096);
    std::vector<double> a(2000);
    for (std::uint64_t id = 0; id < a.size(); ++id)
        a[id] = integral_functional([&](double, std::span<const double> y) { return dens.h(y); },
                                    simulate_flow(c, origin, g, 31, id))
                    .terminal();
    const Estimate e = estimate(a);
    INFO(e.mean, " ", e.se);
    CHECK(std::fabs(e.mean - expected) <= 3.0 * e.se);
}
