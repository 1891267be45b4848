#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/model.hpp>

#include <cmath>

using namespace mvfluct;

TEST_CASE("test functions evaluate and differentiate") {
    const TestFunction id = test_function("id");
    const TestFunction th = test_function("tanh");
    const TestFunction co = test_function("cos");

    CHECK(id(1.7) == 1.7);
    CHECK(th(0.3) == std::tanh(0.3));
    CHECK(co(0.3) == std::cos(0.3));

    const double h = 1e-6;
    for (const auto& tf : {id, th, co}) {
        for (double x : {-1.3, 0.0, 0.4, 2.1}) {
            const double fd1 = (tf(x + h) - tf(x - h)) / (2.0 * h);
            const double fd2 = (tf(x + h) - 2.0 * tf(x) + tf(x - h)) / (h * h);
            CHECK(tf.df(x) == Catch::Approx(fd1).margin(1e-8));
            CHECK(tf.d2f(x) == Catch::Approx(fd2).margin(2e-3));
        }
    }
    CHECK_THROWS_AS(test_function("exp"), InvalidInput);
}

TEST_CASE("mean-field OU drift and diffusion are exact") {
    const MeanFieldOU ou(1.3, 0.4, 0.9);
    const std::vector<double> ys = {1.0, 2.0, 3.0};
    const Cloud c(ys);

    CHECK(ou.drift(0.7, c) == Catch::Approx(-1.3 * 0.7 + 0.4 * 2.0).epsilon(1e-15));
    CHECK(ou.diffusion(5.0, c) == 0.9);

    const FirstDerivs d = ou.first_derivatives(0.7, c, 2.0);
    CHECK(d.dx_b == -1.3);
    CHECK(d.dmu_b == 0.4);
    CHECK(d.flat_b == Catch::Approx(0.4 * 2.0));
    CHECK(d.dx_sig == 0.0);
    CHECK(d.dmu_sig == 0.0);

    const SecondDerivs s = ou.second_derivatives(0.7, c, 2.0, 1.0);
    CHECK(s.dxx_b == 0.0);
    CHECK(s.dmu_dx_b == 0.0);
    CHECK(s.dmumu_b == 0.0);

    CHECK(ou.second_order_zero());
    CHECK(ou.sigma_bounded());
    CHECK_FALSE(ou.sigma_state_dependent());
    CHECK(*ou.declared_kappa(4) == Catch::Approx(2.6));
    CHECK(*ou.declared_gamma() == Catch::Approx(0.4));
    CHECK(*ou.declared_m_sigma() == 0.0);
}

TEST_CASE("OU batched drift matches the scalar path bitwise") {
    const MeanFieldOU ou(0.8, 0.25, 1.1);
    const std::vector<double> X = {-0.4, 0.9, 1.7, -2.2, 0.05};
    const std::size_t N = X.size();
    std::vector<double> b(N), sig(N);
    ou.drift_diffusion_all(X.data(), N, b.data(), sig.data());
    const Cloud c(X);
    for (std::size_t i = 0; i < N; ++i) {
        CHECK(b[i] == ou.drift(X[i], c));
        CHECK(sig[i] == 1.1);
    }
}

TEST_CASE("tanh interaction drift equals the direct sum") {
    const TanhInteraction m(1.0, 0.2, 0.1, 0.55, 0.2);
    const std::vector<double> ys = {-0.8, 0.3, 1.9, 0.0};
    const Cloud c(ys);
    const double x = 0.45;

    double inter = 0.0;
    for (double y : ys) inter += std::tanh(x - y);
    inter /= double(ys.size());
    const double want = -1.0 * x + 0.2 * std::sin(x) + 0.1 * inter;
    CHECK(m.drift(x, c) == Catch::Approx(want).epsilon(1e-15));
    CHECK(m.diffusion(x, c) == Catch::Approx(0.55 + 0.2 * std::cos(x)).epsilon(1e-15));

    CHECK(m.sigma_state_dependent());
    CHECK_FALSE(m.second_order_zero());
    CHECK(*m.declared_m_sigma() == Catch::Approx(0.2));
    CHECK_FALSE(m.declared_kappa(4).has_value());
}

TEST_CASE("convex potential drift from polynomial derivatives") {
    // U(x) = 0.5 x^2, W(u) = 0.25 u^2: b = -x - 0.5 (x - mean)
    const ConvexPotential m({0.0, 0.0, 0.5}, {0.0, 0.0, 0.25}, 1.0);
    const std::vector<double> ys = {1.0, -0.5, 2.5};
    const Cloud c(ys);
    const double x = 0.6, mean = (1.0 - 0.5 + 2.5) / 3.0;
    CHECK(m.drift(x, c) == Catch::Approx(-x - 0.5 * (x - mean)).epsilon(1e-14));
    CHECK(m.second_order_zero());
    CHECK_FALSE(m.certified());

    // quartic confinement turns on the second-order blocks
    const ConvexPotential q({0.0, 0.0, 0.5, 0.0, 0.25}, {0.0, 0.0, 0.25}, 1.0);
    CHECK_FALSE(q.second_order_zero());
    const double want = -(0.6 + 0.25 * 4.0 * 0.6 * 0.6 * 0.6) - 0.5 * (0.6 - mean);
    CHECK(q.drift(0.6, c) == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("derivative declarations agree with finite differences") {
    const auto ou = make_mean_field_ou(1.0, 0.05, 1.0);
    const auto th = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const auto cp = make_convex_potential({0.0, 0.0, 0.5, 0.1, 0.05},
                                          {0.0, 0.0, 0.25, 0.0, 0.02}, 0.7);
    for (const CoefficientModel* m : {ou.get(), th.get(), cp.get()}) {
        const ConsistencyReport rep = check_derivative_consistency(*m);
        INFO(m->id() << " max err " << rep.max_err);
        CHECK(rep.pass);
    }
}

TEST_CASE("zero interaction removes the measure dependence") {
    const MeanFieldOU free(1.0, 0.0, 1.0);
    CHECK_FALSE(free.measure_dependent());
    const std::vector<double> a = {1.0, 2.0}, b = {-5.0, 7.0, 11.0};
    CHECK(free.drift(0.3, Cloud(a)) == free.drift(0.3, Cloud(b)));
}

TEST_CASE("first-order batch matches pointwise derivatives") {
    const TanhInteraction m(1.0, 0.2, 0.1, 0.55, 0.2);
    const std::vector<double> X = {0.2, -1.1, 0.7};
    const std::size_t N = X.size();
    FirstOrderBatch batch;
    m.first_order_batch(X.data(), N, batch);
    REQUIRE(batch.N == N);
    REQUIRE_FALSE(batch.k_b_zero);
    REQUIRE(batch.k_sig_zero);
    REQUIRE_FALSE(batch.dx_sig_zero);
    const Cloud c(X);
    for (std::size_t i = 0; i < N; ++i) {
        const FirstDerivs d = m.first_derivatives(X[i], c, X[i]);
        CHECK(batch.dx_b[i] == Catch::Approx(d.dx_b).epsilon(1e-15));
        CHECK(batch.dx_sig[i] == Catch::Approx(d.dx_sig).epsilon(1e-15));
        for (std::size_t l = 0; l < N; ++l)
            CHECK(batch.k_b[i * N + l] ==
                  Catch::Approx(m.first_derivatives(X[i], c, X[l]).dmu_b).epsilon(1e-15));
    }
}

TEST_CASE("second-order batch zero flags") {
    const MeanFieldOU ou(1.0, 0.05, 1.0);
    const std::vector<double> X = {0.1, 0.2};
    SecondOrderBatch sb;
    ou.second_order_batch(X.data(), X.size(), sb);
    CHECK(sb.b_blocks_zero);
    CHECK(sb.sig_blocks_zero);
    CHECK(sb.dmumu_zero);

    const TanhInteraction th(1.0, 0.2, 0.1, 0.55, 0.2);
    th.second_order_batch(X.data(), X.size(), sb);
    CHECK_FALSE(sb.b_blocks_zero);
    CHECK_FALSE(sb.sig_blocks_zero);
    CHECK(sb.dmumu_zero);
    const Cloud c(X);
    const SecondDerivs d = th.second_derivatives(X[0], c, X[1], X[1]);
    CHECK(sb.k_mudx_b[0 * 2 + 1] == Catch::Approx(d.dmu_dx_b).epsilon(1e-15));
    CHECK(sb.dxx_sig[0] == Catch::Approx(-0.2 * std::cos(X[0])).epsilon(1e-15));
}

TEST_CASE("cloud statistics") {
    const std::vector<double> v = {2.0, 4.0, 9.0};
    const Cloud c(v);
    CHECK(c.mean() == Catch::Approx(5.0));
    CHECK(c.mean_of([](double x) { return x * x; }) == Catch::Approx((4.0 + 16.0 + 81.0) / 3.0));
    CHECK(Cloud().mean() == 0.0);
}
