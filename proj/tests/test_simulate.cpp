#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/simulate.hpp>

#include <cmath>

using namespace mvfluct;

TEST_CASE("paths are reproducible from the seed lineage") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const PathRecord a = simulate_path(*model, 8, 50, 0.01, 42, 3);
    const PathRecord b = simulate_path(*model, 8, 50, 0.01, 42, 3);
    CHECK(a.states == b.states);
    CHECK(a.increments == b.increments);

    const PathRecord c = simulate_path(*model, 8, 50, 0.01, 42, 4);
    CHECK(a.states != c.states);
}

TEST_CASE("one Euler step matches the hand-rolled update") {
    const auto model = make_mean_field_ou(1.3, 0.4, 0.9);
    const std::vector<double> x = {0.5, -1.0, 2.0};
    const std::vector<double> dB = {0.01, -0.02, 0.005};
    std::vector<double> out(3), b, s;
    step_system(*model, x.data(), 3, 0.01, dB.data(), out.data(), b, s);
    const Cloud c(x);
    for (std::size_t i = 0; i < 3; ++i) {
        const double want = x[i] + (-1.3 * x[i] + 0.4 * 0.5) * 0.01 + 0.9 * dB[i];
        CHECK(out[i] == Catch::Approx(want).epsilon(1e-15));
    }
    // in-place update gives the same result
    std::vector<double> y = x;
    step_system(*model, y.data(), 3, 0.01, dB.data(), y.data(), b, s);
    CHECK(y == out);
}

TEST_CASE("streamed observables agree with stored paths") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const TestFunction phi = test_function("tanh");
    const std::size_t N = 6, steps = 40;
    const double dt = 0.01;
    const std::vector<std::size_t> nodes = {0, 17, 40};

    const auto vals = simulate_observables(*model, N, steps, dt, 9, 5, nodes, {phi});
    for (std::size_t r = 0; r < 5; ++r) {
        const PathRecord path = simulate_path(*model, N, steps, dt, 9, r);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const double want =
                path.observable(nodes[k], [&](double x) { return phi(x); });
            CHECK(vals[r][k] == want);
        }
    }
}

TEST_CASE("worker count does not change the numbers") {
    const auto model = make_mean_field_ou(1.0, 0.5, 1.0);
    const auto a = simulate_observables(*model, 16, 30, 0.01, 7, 12, {30},
                                        {test_function("id")}, {}, 1);
    const auto b = simulate_observables(*model, 16, 30, 0.01, 7, 12, {30},
                                        {test_function("id")}, {}, 4);
    CHECK(a == b);
}

TEST_CASE("antithetic pairs negate the linear model exactly") {
    const auto model = make_mean_field_ou(1.0, 0.5, 1.0);
    const InitialLaw init{0.0, 1.0}; // symmetric start keeps the coupling odd
    const auto vals = simulate_observables(*model, 8, 25, 0.01, 5, 10, {10, 25},
                                           {test_function("id")}, init, 0, true);
    for (std::size_t p = 0; p < 5; ++p)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(vals[2 * p + 1][k] == -vals[2 * p][k]);

    CHECK_THROWS_AS(simulate_observables(*model, 8, 25, 0.01, 5, 9, {10},
                                         {test_function("id")}, init, 0, true),
                    InvalidInput);
}

TEST_CASE("nodes must be ordered and on the horizon") {
    const auto model = make_mean_field_ou(1.0, 0.5, 1.0);
    CHECK_THROWS_AS(
        simulate_observables(*model, 4, 20, 0.01, 1, 2, {15, 5}, {test_function("id")}),
        InvalidInput);
    CHECK_THROWS_AS(
        simulate_observables(*model, 4, 20, 0.01, 1, 2, {25}, {test_function("id")}),
        InvalidInput);
}

TEST_CASE("divergence guard names the replicate") {
    // explosive drift: U(x) = -4 x^2 gives b = +8x
    const auto bad = make_convex_potential({0.0, 0.0, -4.0}, {}, 0.5);
    try {
        simulate_path(*bad, 4, 4000, 0.5, 1, 17);
        FAIL("expected divergence");
    } catch (const SimulationDiverged& e) {
        CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
}

TEST_CASE("analytic law flow reproduces the Gaussian moments") {
    const auto model = make_mean_field_ou(1.2, 0.3, 0.8);
    const InitialLaw init{0.4, 0.9};
    const std::size_t steps = 400;
    const double dt = 0.005;
    const LawFlow lf = law_flow(*model, steps, dt, init);
    REQUIRE(lf.kind == LawFlow::AnalyticGaussian);

    // continuous-time moments
    for (double t : {0.0, 0.5, 2.0}) {
        CHECK(lf.mean_t(t) == Catch::Approx(0.4 * std::exp(-0.9 * t)).epsilon(1e-12));
        const double e = std::exp(-2.4 * t);
        CHECK(lf.var_t(t) ==
              Catch::Approx(0.9 * e + 0.64 * (1.0 - e) / 2.4).epsilon(1e-12));
    }

    // Euler-matched recursion replayed by hand
    double m = 0.4, v = 0.9;
    for (std::size_t n = 0; n < steps; ++n) {
        m = (1.0 - 0.9 * dt) * m;
        v = (1.0 - 1.2 * dt) * (1.0 - 1.2 * dt) * v + 0.64 * dt;
    }
    CHECK(lf.m_disc[steps] == Catch::Approx(m).epsilon(1e-14));
    CHECK(lf.v_disc[steps] == Catch::Approx(v).epsilon(1e-14));

    // the discrete moments converge to the continuous ones as dt -> 0
    CHECK(lf.m_disc[steps] == Catch::Approx(lf.mean_t(2.0)).epsilon(0.01));
    CHECK(lf.v_disc[steps] == Catch::Approx(lf.var_t(2.0)).epsilon(0.01));

    // mean_phi(id) is the discrete mean; grid snapping tolerates fuzz
    CHECK(lf.mean_phi(test_function("id"), 1.0) == Catch::Approx(lf.m_disc[200]).margin(1e-12));
    CHECK(lf.node_of(1.0 + 1e-12) == 200);
    CHECK_THROWS_AS(lf.node_of(1.0 + 0.4 * dt), InvalidInput);
}

TEST_CASE("cloud law flow stands in when no analytic form exists") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    LawFlowOptions opts;
    opts.n_ref = 4000;
    const LawFlow lf = law_flow(*model, 100, 0.01, {}, opts);
    REQUIRE(lf.kind == LawFlow::ReferenceCloud);
    CHECK(std::isfinite(lf.mean_phi(test_function("tanh"), 1.0)));
    CHECK(lf.moment_var(1.0) > 0.0);
    CHECK_THROWS_AS(lf.mean_t(1.0), UnsupportedCapability);

    // against the OU analytic backend the cloud must agree within MC error
    const auto ou = make_mean_field_ou(1.0, 0.3, 1.0);
    LawFlowOptions big;
    big.kind = LawFlowOptions::ReferenceCloud;
    big.n_ref = 1u << 15;
    const LawFlow cloud = law_flow(*ou, 100, 0.01, {0.5, 1.0}, big);
    const LawFlow exact = law_flow(*ou, 100, 0.01, {0.5, 1.0});
    CHECK(cloud.moment_mean(1.0) == Catch::Approx(exact.moment_mean(1.0)).margin(0.02));
    CHECK(cloud.moment_var(1.0) == Catch::Approx(exact.moment_var(1.0)).margin(0.04));
}

TEST_CASE("fluctuation samples center both ways") {
    const std::vector<double> values = {1.0, 2.0, 3.0, 6.0};
    const FluctuationSamples fs = fluctuation_samples(values, 4, 2.0);
    CHECK(fs.G[0] == Catch::Approx(2.0 * (1.0 - 2.0)));
    CHECK(fs.G[3] == Catch::Approx(2.0 * (6.0 - 2.0)));
    CHECK(fs.F[0] == Catch::Approx(2.0 * (1.0 - 3.0)));
    CHECK(mean_of(fs.F) == Catch::Approx(0.0).margin(1e-14));
}
