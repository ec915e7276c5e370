#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <memory>
#include <vector>

#include "flowgrad/coefficients.hpp"
#include "flowgrad/config.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/gaussian.hpp"
#include "flowgrad/grid.hpp"
#include "flowgrad/quadrature.hpp"
#include "flowgrad/rng.hpp"
#include "flowgrad/stats.hpp"

using namespace flowgrad;
using nlohmann::json;

namespace {

CoefficientSet make(std::size_t d, DriftParams p, DiffusionParams s = diffusion::Identity{}, double R = 10.0) {
    return make_coefficients(std::make_shared<const DriftSpec>(d, R, std::move(p)),
                             std::make_shared<const DiffusionSpec>(d, d, std::move(s)));
}

}  // namespace

TEST_CASE("philox known answers") {
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::generate(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("normal quantile against reference values") {
    const std::vector<std::pair<double, double>> ref{
        {1e-300, -37.0470962993612},       {1e-20, -9.262340089798409},  {1e-10, -6.361340902404056},
        {0.001, -3.090232306167813},       {0.025, -1.9599639845400545}, {0.3, -0.5244005127080409},
        {0.5, 0.0},                        {0.7, 0.5244005127080407},    {0.975, 1.959963984540054},
        {0.999, 3.090232306167813},        {1 - 1e-12, 7.0344869100478356}};
    for (auto [p, z] : ref) CHECK(normal_quantile(p) == doctest::Approx(z).epsilon(1e-13));
}

TEST_CASE("normal stream is random access and keyed") {
    const NormalStream a(7, 3), b(7, 4), c(8, 3);
    std::vector<double> v(10);
    a.fill(5, v);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == a.at(5 + i));
    CHECK(a.at(0) != b.at(0));
    CHECK(a.at(0) != c.at(0));
    CHECK(NormalStream(7, 3).at(123) == a.at(123));
    CHECK(bits_to_open_unit(0) > 0.0);
    CHECK(bits_to_open_unit(~std::uint64_t{0}) < 1.0);

    RunningStats s;
    for (std::uint64_t j = 0; j < 20000; ++j) s.push(a.at(j));
    CHECK(std::fabs(s.mean()) < 4.0 / std::sqrt(20000.0));
    CHECK(s.variance() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("time grid") {
    const TimeGrid g(0.0, 1.0, 8);
    CHECK(g.step() == 0.125);
    CHECK(g.node(8) == 1.0);
    CHECK(g.n_nodes() == 9);
    const TimeGrid r = g.refined(4);
    CHECK(r.n_steps() == 32);
    CHECK(r.node(12) == g.node(3));
    CHECK(g.slice(2, 3).node(0) == g.node(2));
    CHECK_THROWS_AS(TimeGrid(0.0, 0.0, 4), ConfigError);
    CHECK_THROWS_AS(TimeGrid(-1.0, 1.0, 4), ConfigError);
    CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 0), ConfigError);
}

TEST_CASE("statistics") {
    const std::vector<double> x{1, 2, 3, 4};
    const Estimate e = estimate(x);
    CHECK(e.mean == 2.5);
    CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(quantile(x, 0.9) == doctest::Approx(3.7));
    CHECK(quantile(x, 0.0) == 1.0);
    CHECK(pairwise_sum(std::vector<double>(1000, 0.1)) == doctest::Approx(100.0).epsilon(1e-14));
    RunningStats a, b;
    a.push(1);
    a.push(2);
    b.push(3);
    b.push(4);
    a.merge(b);
    CHECK(a.mean() == 2.5);
    CHECK(a.variance() == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("quadrature rules") {
    const GaussRule& gl = gauss_legendre(8);
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) s += gl.weights[i] * std::pow(gl.nodes[i], 6);
    CHECK(s == doctest::Approx(2.0 / 7.0).epsilon(1e-14));
    const GaussRule& gh = gauss_hermite(16);
    double m4 = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) m4 += gh.weights[i] * std::pow(gh.nodes[i], 4);
    CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(integrate_gl([](double x) { return std::exp(x); }, 0.0, 1.0, 16, 2) == doctest::Approx(std::exp(1.0) - 1.0));
    CHECK(integrate_adaptive([](double x) { return std::cos(x); }, 0.0, 2.0, 1e-12) == doctest::Approx(std::sin(2.0)).epsilon(1e-12));

    CHECK(upper_gamma(-0.5, 1.0) == doctest::Approx(0.178147711781560690).epsilon(1e-12));
    CHECK(upper_gamma(0.0, 2.5) == doctest::Approx(0.0249149178702697355).epsilon(1e-12));
    CHECK(upper_gamma(0.5, 0.3) == doctest::Approx(0.777359311249808052).epsilon(1e-12));
    CHECK(upper_gamma(2.5, 1.7) == doctest::Approx(0.848876789458320643).epsilon(1e-12));
    CHECK(heat_kernel_time_integral_1d(0.0, 1.0) == doctest::Approx(0.797884560802865356).epsilon(1e-13));
    CHECK(heat_kernel_time_integral_1d(0.5, 1.0) == doctest::Approx(0.395593114802612059).epsilon(1e-12));

    const TensorRule t = tensor_gauss(2, 0.5, 4);
    double area = 0.0;
    for (double w : t.weights) area += w;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gaussian kernel") {
    const std::vector<double> o{0.0}, o2{0.0, 0.0}, y2{1.0, 0.0};
    CHECK(gaussian_kernel(0.0, o, 1.0, o) == doctest::Approx(0.398942280401432678).epsilon(1e-14));
    CHECK(gaussian_kernel(0.0, o2, 0.5, y2) == doctest::Approx(std::exp(-1.0) / M_PI).epsilon(1e-14));
    const std::vector<double> sing{1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(make_gaussian_frame(sing, 2), NumericError);
}

TEST_CASE("catalog drifts") {
    std::vector<double> out(1), g(1);
    const std::vector<double> xm2{-2.0}, x2{2.0}, x0{0.0};

    const CoefficientSet zero = make(1, drift::Zero{});
    zero.drift->value(0.3, x2, out);
    CHECK(out[0] == 0.0);
    CHECK(zero.ellipticity == 1.0);

    const CoefficientSet sign = make(1, drift::Sign{0.5});
    sign.drift->value(0.0, xm2, out);
    CHECK(out[0] == -0.5);
    CHECK_FALSE(sign.drift->is_smooth());
    const MeasureMatrix mu = sign.drift->derivative_measure();
    REQUIRE(mu.at(0, 0).atoms().size() == 1);
    CHECK(mu.at(0, 0).atoms()[0].weight == 1.0);
    CHECK(mu.at(0, 0).atoms()[0].location[0] == 0.0);
    CHECK_THROWS_AS(sign.drift->gradient(0.0, x2, g), ConfigError);

    const CoefficientSet lin = make(1, drift::Linear{{0.3}});
    lin.drift->value(0.0, x2, out);
    CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
    lin.drift->gradient(0.0, x2, g);
    CHECK(g[0] == doctest::Approx(0.3).epsilon(1e-15));
    const std::vector<double> far{9.7};
    lin.drift->value(0.0, far, out);
    CHECK(std::fabs(out[0]) < 0.3 * 9.7);
    const std::vector<double> beyond{10.5};
    lin.drift->value(0.0, beyond, out);
    CHECK(out[0] == 0.0);
}

TEST_CASE("drift gradients agree with central differences") {
    const CoefficientSet bump =
        make(2, drift::Bump{{0.7, -0.4}, {0.2, 0.1}, 1.5}, diffusion::Identity{}, 10.0);
    const CoefficientSet lin = make(2, drift::Linear{{0.3, -0.2, 0.1, 0.5}}, diffusion::Identity{}, 4.0);
    for (const CoefficientSet* c : {&bump, &lin}) {
        const std::vector<double> x{0.4, -0.3};
        std::vector<double> g(4), ap(2), am(2);
        c->drift->gradient(0.0, x, g);
        const double h = 1e-6;
        for (std::size_t j = 0; j < 2; ++j) {
            std::vector<double> xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            c->drift->value(0.0, xp, ap);
            c->drift->value(0.0, xm, am);
            for (std::size_t i = 0; i < 2; ++i) CHECK(g[i * 2 + j] == doctest::Approx((ap[i] - am[i]) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("diffusion catalog") {
    const DiffusionSpec bump(1, 1, diffusion::DiagonalBump{{1.0}, 0.2, {0.0}, 1.0});
    CHECK(bump.ellipticity() == doctest::Approx(1.0));
    CHECK(bump.max_covariance_eigenvalue() == doctest::Approx(1.44));
    CHECK_FALSE(bump.has_zero_gradient());
    std::vector<double> g(1), sp(1), sm(1);
    const std::vector<double> x{0.3}, xp{0.3 + 1e-6}, xm{0.3 - 1e-6};
    bump.gradient(0.0, x, 0, g);
    bump.matrix(0.0, xp, sp);
    bump.matrix(0.0, xm, sm);
    CHECK(g[0] == doctest::Approx((sp[0] - sm[0]) / 2e-6).epsilon(1e-6));

    auto drift = std::make_shared<const DriftSpec>(2, 10.0, drift::Linear{{0.3, 0, 0, 0.3}});
    auto singular = std::make_shared<const DiffusionSpec>(2, 2, diffusion::Constant{{1, 1, 1, 1}});
    CHECK_THROWS_AS(make_coefficients(drift, singular), ConfigError);
}

TEST_CASE("config parsing") {
    const json doc = json::parse(R"({"schema_version": 1, "dim": 1, "bound_R": 10,
        "drift": {"type": "sign1d", "kappa": 0.5}, "diffusion": {"type": "identity"},
        "measure": {"atoms": [{"location": [0.0], "weight": 1.0}]}})");
    const Config c = parse_config(doc);
    CHECK(c.dim == 1);
    CHECK(c.base.drift->id() == "sign1d");
    REQUIRE(c.measure);
    CHECK(c.measure->atoms().size() == 1);

    json bad = doc;
    bad["bogus"] = 1;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = doc;
    bad["drift"]["kapa"] = 0.5;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = doc;
    bad["drift"]["type"] = "nope";
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = doc;
    bad["schema_version"] = 2;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

    json moll = doc;
    moll["mollify_n"] = 16;
    const Config m = parse_config(moll);
    CHECK(m.coefficients.drift->is_smooth());
    CHECK_FALSE(m.base.drift->is_smooth());
}
