#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/constants.hpp>

#include <cmath>

using namespace mvfluct;

TEST_CASE("kappa on the linear model is exactly two theta") {
    const auto ou = make_mean_field_ou(1.0, 0.05, 1.0);
    KappaOptions opt;
    opt.n_samples = 2000;
    for (int p : {2, 4, 8}) {
        const KappaEstimate est = estimate_kappa(*ou, p, opt);
        CHECK(est.value == Catch::Approx(2.0).margin(1e-10));
        REQUIRE(est.declared.has_value());
        CHECK(*est.declared == 2.0);
    }

    const auto ou2 = make_mean_field_ou(1.7, 0.1, 0.5);
    CHECK(estimate_kappa(*ou2, 4, opt).value == Catch::Approx(3.4).margin(1e-9));
}

TEST_CASE("kappa on the tanh model is positive and below two theta") {
    // the interaction and sine perturbations can only weaken the contraction
    const auto m = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    KappaOptions opt;
    opt.n_samples = 4000;
    const KappaEstimate k4 = estimate_kappa(*m, 4, opt);
    CHECK(k4.value > 0.5);
    CHECK(k4.value < 2.0);
    // kappa_p decreases in p when sigma depends on the state
    const KappaEstimate k8 = estimate_kappa(*m, 8, opt);
    CHECK(k8.value <= k4.value + 1e-12);
}

TEST_CASE("xi and lambda closed forms") {
    CHECK(xi_constant(2, 5.0) == 1.0);
    CHECK(xi_constant(4, 8.0) == Catch::Approx(13.5).epsilon(1e-14)); // 3 (36/8)^1
    CHECK(xi_constant(4, 2.0) == Catch::Approx(54.0).epsilon(1e-14));
    // p = 2, kappa = 12, M = 0: Lambda = ((12/12)^1 (1+0) + 1)^{1/2} = sqrt(2)
    CHECK(lambda_constant(2, 12.0, 0.0) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(xi_constant(4, 0.0), InvalidInput);
    CHECK_THROWS_AS(xi_constant(1, 1.0), InvalidInput);
}

TEST_CASE("eta against an independent recomputation") {
    // p = 4, kappa = 8, M = 0, gamma = 0.05, spelled out digit by digit
    const double lam4 = std::pow(std::pow(36.0 / 8.0, 3.0) + 13.5, 0.25);
    const double eta4 = std::pow(2.0, 0.25) * lam4 * 0.05 * std::pow(8.0 / 32.0, 0.25);
    CHECK(lambda_constant(4, 8.0, 0.0) == Catch::Approx(lam4).epsilon(1e-12));
    CHECK(eta_constant(4, 8.0, 0.0, 0.05) == Catch::Approx(eta4).epsilon(1e-12));

    // gamma = 0 kills every eta
    CHECK(eta_constant(4, 2.0, 0.0, 0.0) == 0.0);
    CHECK(eta_constant(8, 2.0, 0.3, 0.0) == 0.0);
    CHECK(eta4_second_constant(2.0, 0.0, 0.0) == 0.0);

    // at kappa = 2, p = 8 the prefactors cancel: eta8 = Lambda8 gamma
    const double lam8 = std::pow(std::pow(42.0, 7.0) + 7.0 * std::pow(126.0, 3.0), 0.125);
    CHECK(eta_constant(8, 2.0, 0.0, 0.05) == Catch::Approx(lam8 * 0.05).epsilon(1e-12));
}

TEST_CASE("omega landscape for the mild linear model") {
    std::map<int, double> kappa;
    for (int p : {2, 4, 6, 8, 10, 12, 14}) kappa[p] = 2.0;
    const OmegaResult res = compute_omega(kappa, 0.05, 0.0);

    // independent recomputation of each term
    double best = 1e300;
    int argp = 0;
    for (int p : {2, 4, 6, 8, 10, 12, 14}) {
        const double e = double(p - 1) / double(p);
        const double t = 1.0 - std::pow(2.0, e) * 0.05 -
                         0.5 * double(p - 1) * std::pow(2.0, 2.0 * e) * 0.0025;
        CHECK(res.terms.at(p) == Catch::Approx(t).epsilon(1e-14));
        if (t < best) {
            best = t;
            argp = p;
        }
    }
    CHECK(res.omega == Catch::Approx(best).epsilon(1e-14));
    CHECK(res.argmin_p == argp);
    CHECK(res.argmin_p == 14); // the quadratic term grows with p
    CHECK(res.omega > 0.8);
    CHECK(res.omega < 0.9);

    // omega <= min_p kappa_p / 2
    CHECK(res.omega <= 1.0);
}

TEST_CASE("stability constants bundle") {
    const StabilityConstants sc = compute_stability_constants(2.0, 2.0, 0.0, 0.05);
    CHECK(sc.omega_hat == Catch::Approx(0.25).epsilon(1e-15));
    CHECK(sc.xi4 == Catch::Approx(54.0));
    CHECK(sc.eta4 == Catch::Approx(eta_constant(4, 2.0, 0.0, 0.05)).epsilon(1e-15));
    CHECK(sc.eta4 < 1.0);
    // the p = 8 condition genuinely fails at gamma = 0.05: eta8 = Lambda8 gamma
    CHECK(sc.eta8 > 1.0);
    CHECK(sc.eta8 == Catch::Approx(sc.lambda8 * 0.05).epsilon(1e-12));
    CHECK(compute_stability_constants(2.0, 2.0, 0.0, 0.037).eta8 < 1.0);
}

TEST_CASE("sensitivity suprema on closed-form models") {
    KappaOptions opt;
    opt.n_samples = 4000;
    const auto ou = make_mean_field_ou(1.0, 0.05, 1.0);
    const SensitivityEstimates s = estimate_sensitivities(*ou, opt);
    CHECK(s.gamma_hat == Catch::Approx(0.05).margin(1e-9));
    CHECK(s.m_sigma_hat == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.m2_hat == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.sigma_sup == Catch::Approx(1.0).margin(1e-12));

    const auto th = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const SensitivityEstimates st = estimate_sensitivities(*th, opt);
    // sup_v |gamma sech^2| = 0.1, sup |sigma1 sin| = 0.2, sup |sigma| = 0.75
    CHECK(st.gamma_hat == Catch::Approx(0.1).margin(1e-6));
    CHECK(st.m_sigma_hat == Catch::Approx(0.2).margin(1e-6));
    CHECK(st.sigma_sup == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("assumption report round trip and determinism") {
    const auto ou = make_mean_field_ou(1.0, 0.05, 1.0);
    AssumptionOptions opt;
    opt.search.n_samples = 2000;
    opt.search.nm_iters = 100;
    const AssumptionReport a = check_assumptions(*ou, opt);
    const AssumptionReport b = check_assumptions(*ou, opt);

    CHECK(a.kappa.at(4).value == b.kappa.at(4).value);
    CHECK(a.sens.gamma_hat == b.sens.gamma_hat);
    CHECK(a.omega.omega == b.omega.omega);
    CHECK(a.summary_text() == b.summary_text());

    CHECK(a.stability.omega_hat == Catch::Approx(0.25).margin(1e-10));
    CHECK(a.certified);
    // the declared-vs-sampled cross-check holds for the linear model
    bool found = false;
    for (const auto& f : a.flags)
        if (f.name == "declared_vs_sampled") {
            found = true;
            CHECK(f.pass);
        }
    CHECK(found);
}

TEST_CASE("uncertified models carry the caveat") {
    const auto cp = make_convex_potential({0.0, 0.0, 0.5}, {0.0, 0.0, 0.25}, 1.0);
    AssumptionOptions opt;
    opt.search.n_samples = 1000;
    opt.search.nm_iters = 50;
    const AssumptionReport rep = check_assumptions(*cp, opt);
    CHECK_FALSE(rep.certified);
    CHECK(rep.summary_text().find("UNCERTIFIED") != std::string::npos);
}
