#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/variance.hpp>

#include <cmath>
#include <vector>

using namespace mvfluct;

TEST_CASE("backward pde reproduces the linear-observable closed form") {
    // phi = id keeps psi_s linear, so the representation collapses to
    //   sigma^2 = e^{-2 kt} v0 + Sigma^2 (1 - e^{-2 kt}) / (2k),
    // k = theta - gamma for the linear-functional kernel (the interaction
    // feeds the slope), k = theta for the Lions kernel (it only shifts).
    const double theta = 1.0, gamma = 0.4, Sigma = 0.7;
    const InitialLaw init{0.3, 0.81};
    const double t = 1.0, dt = 2e-3;
    const std::size_t steps = 500;
    const auto model = make_mean_field_ou(theta, gamma, Sigma);
    const LawFlow lf = law_flow(*model, steps, dt, init);
    const TestFunction phi = test_function("id");

    auto closed = [&](double k) {
        const double e = std::exp(-2.0 * k * t);
        return init.var * e + Sigma * Sigma * (1.0 - e) / (2.0 * k);
    };

    PdeOptions opt;
    opt.nx = 401;
    opt.keep_history = true;
    const BackwardPdeSolution sol = solve_backward_pde(*model, lf, phi, t, opt);
    CHECK(sol.integrand[steps] == Catch::Approx(Sigma * Sigma).epsilon(1e-10));
    for (std::size_t i = 0; i < sol.xg.size(); ++i)
        CHECK(sol.history[steps][i] == phi(sol.xg[i]));
    // terminal slope 1 decays at rate theta - gamma going backward
    const double slope = sol.psi0_at(1.0) - sol.psi0_at(0.0);
    CHECK(slope == Catch::Approx(std::exp(-(theta - gamma) * t)).epsilon(2e-3));
    CHECK(limiting_variance(sol, lf, init) ==
          Catch::Approx(closed(theta - gamma)).epsilon(5e-3));

    PdeOptions lions = opt;
    lions.kernel = MeasureKernel::Lions;
    const BackwardPdeSolution sol2 = solve_backward_pde(*model, lf, phi, t, lions);
    CHECK(limiting_variance(sol2, lf, init) == Catch::Approx(closed(theta)).epsilon(5e-3));

    CHECK_THROWS_AS(solve_backward_pde(*model, lf, phi, 0.0, opt), InvalidInput);
    CHECK_THROWS_AS(solve_backward_pde(*model, lf, phi, 0.5 * dt, opt), InvalidInput);
}

TEST_CASE("exact finite-N recursion keeps the linear-observable bookkeeping") {
    const MeanFieldOU model(1.0, 0.5, 1.0);
    const InitialLaw init{0.8, 1.0};
    const double dt = 4e-3;
    const std::size_t steps = 250, N = 8;
    const GaussHermite gh = gauss_hermite(64);
    const OuExactVariance ex =
        ou_exact_sigma2(model, init, dt, steps, N, test_function("id"), gh);
    // for phi = id the pair integral is literally v + (N-1) c
    CHECK(ex.sigma2 == Catch::Approx(ex.var + double(N - 1) * ex.cov).epsilon(1e-10));
    CHECK(ex.mean == Catch::Approx(std::pow(1.0 - 0.5 * dt, double(steps)) * 0.8).epsilon(1e-12));
    CHECK_THROWS_AS(ou_exact_sigma2(model, init, dt, steps, 1, test_function("id"), gh),
                    InvalidInput);
}

TEST_CASE("finite-N variance approaches its limit at rate 1/N") {
    const MeanFieldOU model(1.0, 0.5, 1.0);
    const InitialLaw init{0.0, 0.25};
    const double dt = 4e-3;
    const std::size_t steps = 250;
    const GaussHermite gh = gauss_hermite(64);
    const TestFunction phi = test_function("tanh");
    const double lim = ou_exact_sigma2_limit(model, init, dt, steps, phi, gh).sigma2;
    auto gap = [&](std::size_t N) {
        return std::abs(ou_exact_sigma2(model, init, dt, steps, N, phi, gh).sigma2 - lim);
    };
    const double g8 = gap(8), g16 = gap(16), g32 = gap(32);
    CHECK(g8 / g16 == Catch::Approx(2.0).margin(0.3));
    CHECK(g16 / g32 == Catch::Approx(2.0).margin(0.3));
    CHECK(g32 > 1e-12); // the gap is resolved, not noise
}

TEST_CASE("exact recursion matches a Monte Carlo cross-check") {
    const MeanFieldOU model(1.0, 0.5, 1.0);
    const InitialLaw init{0.8, 1.0};
    const double dt = 4e-3;
    const std::size_t steps = 250, N = 8, R = 20000;
    const TestFunction phi = test_function("tanh");
    const GaussHermite gh = gauss_hermite(64);
    const OuExactVariance ex = ou_exact_sigma2(model, init, dt, steps, N, phi, gh);

    const auto vals =
        simulate_observables(model, N, steps, dt, 1234, R, {steps}, {phi}, init);
    std::vector<double> col(R);
    for (std::size_t r = 0; r < R; ++r) col[r] = vals[r][0];
    const EmpiricalVariance mc = empirical_variance(col, N);
    CHECK(std::abs(mc.sigma2 - ex.sigma2) < 5.0 * mc.se);
    CHECK(mc.se < 0.05 * ex.sigma2);
}

TEST_CASE("pde and dt-matched limit agree for a smooth observable") {
    const MeanFieldOU model(1.0, 0.5, 1.0);
    const InitialLaw init{0.0, 0.25};
    const double t = 1.0, dt = 4e-3;
    const std::size_t steps = 250;
    const TestFunction phi = test_function("tanh");
    const GaussHermite gh = gauss_hermite(64);
    const double lim = ou_exact_sigma2_limit(model, init, dt, steps, phi, gh).sigma2;

    const LawFlow lf = law_flow(model, steps, dt, init);
    PdeOptions opt;
    opt.nx = 801;
    const BackwardPdeSolution sol = solve_backward_pde(model, lf, phi, t, opt);
    const double pde = limiting_variance(sol, lf, init);
    CHECK(pde == Catch::Approx(lim).epsilon(0.02));
}

TEST_CASE("empirical variance closed form and jackknife") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6};
    const std::size_t N = 7;
    const EmpiricalVariance ev = empirical_variance(v, N);
    CHECK(ev.sigma2 == Catch::Approx(7.0 * 3.5).epsilon(1e-13));
    CHECK(ev.replicates == 6);

    std::vector<double> loo;
    for (std::size_t r = 0; r < v.size(); ++r) {
        std::vector<double> rest;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (i != r) rest.push_back(v[i]);
        loo.push_back(double(N) * sample_variance(rest));
    }
    CHECK(ev.se == Catch::Approx(jackknife_se(loo)).epsilon(1e-12));
    CHECK_THROWS_AS(empirical_variance({1.0, 2.0}, N), InvalidInput);
}

TEST_CASE("weak expansion coefficients follow their definition") {
    const std::vector<double> v = {0.2, 0.4, 0.9};
    const WeakExpansionPoint wp = weak_expansion_coefficient(v, 10, 0.5);
    CHECK(wp.alpha1 == Catch::Approx(0.0).margin(1e-12));
    CHECK(wp.alpha2 == Catch::Approx(10.0 * (1.01 / 3.0 - 0.25)).epsilon(1e-12));
    CHECK(wp.alpha1_se ==
          Catch::Approx(10.0 * std::sqrt(sample_variance(v) / 3.0)).epsilon(1e-12));
    CHECK(wp.alpha2_se > 0.0);
    CHECK_THROWS_AS(weak_expansion_coefficient({0.1}, 10, 0.0), InvalidInput);
}

TEST_CASE("variance gap recovers a synthetic power law") {
    const std::vector<double> Ns = {8, 16, 32, 64};
    const std::vector<double> ref = {1.0, 1.1, 1.2};
    std::vector<std::vector<double>> curves;
    for (double N : Ns) {
        std::vector<double> c = ref;
        for (double& x : c) x += 3.7 / N;
        curves.push_back(c);
    }
    const VarianceGap vg = variance_gap(Ns, curves, ref);
    for (std::size_t i = 0; i < Ns.size(); ++i)
        CHECK(vg.sup_gap[i] == Catch::Approx(3.7 / Ns[i]).epsilon(1e-12));
    CHECK(vg.slope == Catch::Approx(-1.0).epsilon(1e-10));

    CHECK_THROWS_AS(variance_gap({8}, {{1.0, 2.0}}, ref), InvalidInput);
    CHECK_THROWS_AS(variance_gap({}, {}, ref), InvalidInput);
}
