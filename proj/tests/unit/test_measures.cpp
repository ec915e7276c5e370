#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/measures.hpp"
#include "flowgrad/mollify.hpp"
#include "flowgrad/quadrature.hpp"

using namespace flowgrad;

namespace {

SpaceTimeMeasure delta0(std::size_t d, double w = 1.0) {
    SpaceTimeMeasure m(d);
    m.add_atom({std::vector<double>(d, 0.0), w});
    return m;
}

const double sqrt_2_over_pi = 0.797884560802865356;

}  // namespace

TEST_CASE("kato integral of the origin atom") {
    const std::vector<double> x0{0.0};
    // ∫_0^1 (2πs)^{-1/2} ds with s = u², no singularity left for the rule.
    const double oracle = integrate_gl([](double u) { return 2.0 / std::sqrt(2.0 * M_PI); }, 0.0, 1.0);
    CHECK(kato_integral(delta0(1), 0.0, x0, 1.0) == doctest::Approx(sqrt_2_over_pi).epsilon(1e-13));
    CHECK(kato_integral(delta0(1), 0.0, x0, 1.0) == doctest::Approx(oracle).epsilon(1e-13));
    CHECK(kato_integral(delta0(1, -1.0), 0.0, x0, 1.0) == doctest::Approx(sqrt_2_over_pi).epsilon(1e-13));
    CHECK(kato_integral(SpaceTimeMeasure(1), 0.0, x0, 1.0) == 0.0);
}

TEST_CASE("kato integral of a wide constant density") {
    SpaceTimeMeasure m(1);
    m.add_density(constant_ball_density(1, 1.0, 20.0));
    const std::vector<double> x0{0.0};
    CHECK(kato_integral(m, 0.0, x0, 0.5) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("heat potential far from an atom") {
    const GaussianFrame f = make_gaussian_frame({}, 1);
    const std::vector<double> far{10.0};
    CHECK(heat_potential(delta0(1), far, 1.0, f) < 1e-8);
    CHECK(heat_potential(delta0(1), far, 1.0, f) > 0.0);
}

TEST_CASE("kato classification") {
    CHECK(classify_kato(delta0(1)).is_kato);
    const KatoVerdict v2 = classify_kato(delta0(2));
    CHECK_FALSE(v2.is_kato);
    CHECK(std::isinf(v2.witness_value));
    REQUIRE(v2.witness_x0.size() == 2);
    CHECK(v2.witness_x0[0] == 0.0);
    for (std::size_t d = 1; d <= 3; ++d) {
        SpaceTimeMeasure m(d);
        m.add_density(constant_ball_density(d, 2.0, 1.5));
        CHECK(classify_kato(m).is_kato);
    }
    SpaceTimeMeasure plane(2);
    plane.add_hyperplane({{0.6, 0.8}, 0.3, 1.0, {}, 1.0});
    CHECK(classify_kato(plane).is_kato);
    SpaceTimeMeasure three(3);
    three.add_atom({{0.0, 0.0, 0.0}, 1.0});
    CHECK_FALSE(classify_kato(three).is_kato);
}

TEST_CASE("kato ball integrals") {
    const std::vector<double> o1{0.0}, o2{0.0, 0.0};
    CHECK(kato_ball_integral(delta0(1), o1, 0.5) == 0.0);
    SpaceTimeMeasure m(2);
    m.add_density(constant_ball_density(2, 1.0, 5.0));
    // ∫_{|y|<=ε} ln(1/|y|) dy = 2π ε² (1/4 - ln(ε)/2)
    const double eps = 0.25;
    CHECK(kato_ball_integral(m, o2, eps) ==
          doctest::Approx(2.0 * M_PI * eps * eps * (0.25 - 0.5 * std::log(eps))).epsilon(1e-6));
}

TEST_CASE("hahn jordan parts") {
    SpaceTimeMeasure m(1);
    m.add_atom({{0.0}, 1.0});
    m.add_atom({{1.0}, -2.0});
    m.add_density(gaussian_density({0.0}, -0.5, 1.0));
    const SpaceTimeMeasure p = m.positive_part(), n = m.negative_part(), v = m.variation();
    REQUIRE(p.atoms().size() == 1);
    CHECK(p.atoms()[0].weight == 1.0);
    REQUIRE(n.atoms().size() == 1);
    CHECK(n.atoms()[0].weight == 2.0);
    CHECK(n.densities().size() == 1);
    const std::vector<double> lo{-10.0}, hi{10.0};
    const double total = (p + n.scaled(-1.0)).box_mass(lo, hi);
    CHECK(total == doctest::Approx(m.box_mass(lo, hi)).epsilon(1e-10));
    CHECK(v.box_mass(lo, hi) == doctest::Approx(3.0 + 0.5 * std::sqrt(2.0 * M_PI)).epsilon(1e-8));
    const std::vector<double> a{-0.5}, b{0.5};
    CHECK(SpaceTimeMeasure(delta0(1)).box_mass(a, b) == 1.0);
}

TEST_CASE("unit sphere areas") {
    CHECK(unit_sphere_area(1) == doctest::Approx(2.0));
    CHECK(unit_sphere_area(2) == doctest::Approx(2.0 * M_PI));
    CHECK(unit_sphere_area(3) == doctest::Approx(4.0 * M_PI));
}

TEST_CASE("mollifier has unit mass") {
    for (std::size_t d = 1; d <= 2; ++d) {
        const Mollifier w(d, 8);
        CHECK(w.raw_rule_mass() == doctest::Approx(1.0).epsilon(1e-6));
        double s = 0.0;
        for (double x : w.rule().weights) s += x;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    const Mollifier w(1, 4);
    const double mass = integrate_gl([&](double x) { return w(std::vector<double>{x}); }, -0.25, 0.25, 64, 8);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(w.marginal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.marginal_cdf(0.3) == 1.0);
}

TEST_CASE("mollified drifts") {
    auto sign = std::make_shared<const DriftSpec>(1, 10.0, drift::Sign{0.5});
    std::vector<double> out(1);
    for (int n : {4, 16, 64}) {
        const auto m = mollify_drift(sign, n);
        CHECK(m->is_smooth());
        m->value(0.0, std::vector<double>{0.0}, out);
        CHECK(std::fabs(out[0]) < 1e-15);
        m->value(0.0, std::vector<double>{1.5 / n}, out);
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-14));
        m->value(0.0, std::vector<double>{-2.0}, out);
        CHECK(out[0] == doctest::Approx(-0.5).epsilon(1e-14));
    }
    auto constant = std::make_shared<const DriftSpec>(2, 10.0, drift::Constant{{0.3, -0.7}});
    std::vector<double> out2(2);
    mollify_drift(constant, 8)->value(0.0, std::vector<double>{0.2, 0.1}, out2);
    CHECK(out2[0] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(out2[1] == doctest::Approx(-0.7).epsilon(1e-14));
}

TEST_CASE("mollified gradient matches the smeared jump") {
    auto sign = std::make_shared<const DriftSpec>(1, 10.0, drift::Sign{0.5});
    const auto m = mollify_drift(sign, 16);
    const Mollifier w(1, 16);
    std::vector<double> g(1), ap(1), am(1);
    for (double x : {0.0, 0.02, -0.05}) {
        m->gradient(0.0, std::vector<double>{x}, g);
        CHECK(g[0] == doctest::Approx(1.0 * w(std::vector<double>{x})).epsilon(1e-8));
        const double h = 1e-5;
        m->value(0.0, std::vector<double>{x + h}, ap);
        m->value(0.0, std::vector<double>{x - h}, am);
        CHECK(g[0] == doctest::Approx((ap[0] - am[0]) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("mollified measures") {
    const Mollifier w(1, 8);
    const DensityPart k = mollify_measure_to_density(delta0(1), 8);
    for (double x : {0.0, 0.05, -0.1, 0.2})
        CHECK(k.h(std::vector<double>{x}) == doctest::Approx(w(std::vector<double>{x})).epsilon(1e-12));
    const DensityPart j = mollify_measure_to_density(delta0(1, 1.0), 16);
    const double mass = integrate_gl([&](double x) { return j.h(std::vector<double>{x}); }, -1.0 / 16, 1.0 / 16, 64, 8);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    const DensityPart z = mollify_measure_to_density(SpaceTimeMeasure(1), 8);
    CHECK(z.h(std::vector<double>{0.0}) == 0.0);
}

TEST_CASE("mollification converges pointwise at continuity points") {
    auto bump = std::make_shared<const DriftSpec>(1, 10.0, drift::Bump{{1.0}, {0.0}, 1.0});
    auto sign = std::make_shared<const DriftSpec>(1, 10.0, drift::Sign{0.5});
    for (const auto& base : {bump, sign}) {
        std::vector<double> errors;
        for (int n : {4, 16, 64, 256}) {
            const auto m = mollify_drift(base, n);
            double worst = 0.0;
            std::vector<double> a(1), b(1);
            for (int i = 0; i < 100; ++i) {
                const double x = -1.5 + 3.0 * (i + 0.5) / 100.0;
                base->value(0.0, std::vector<double>{x}, a);
                m->value(0.0, std::vector<double>{x}, b);
                worst = std::max(worst, std::fabs(a[0] - b[0]));
            }
            errors.push_back(worst);
        }
        for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i] <= 2.0 * errors[i - 1]);
        CHECK(errors.back() < errors.front());
    }
}
