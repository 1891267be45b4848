#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/malliavin.hpp>

#include <cmath>
#include <map>
#include <vector>

using namespace mvfluct;

namespace {

// rerun the recorded Euler path with selected increments bumped
std::vector<double> terminal_with_bumps(const CoefficientModel& model,
                                        const PathRecord& path,
                                        const std::vector<std::pair<Direction, double>>& bumps) {
    std::vector<double> x(path.state_row(0), path.state_row(0) + path.N);
    std::vector<double> dB(path.N), b, s;
    for (std::size_t n = 0; n < path.steps; ++n) {
        const double* base = path.increment_row(n);
        std::copy(base, base + path.N, dB.begin());
        for (const auto& [d, h] : bumps)
            if (d.node == n) dB[d.j] += h;
        step_system(model, x.data(), path.N, path.dt, dB.data(), x.data(), b, s);
    }
    return x;
}

} // namespace

TEST_CASE("linear tangents match the eigendecomposition of the step matrix") {
    // J = (1 - theta dt) I + (gamma dt / N) ones: rank-one perturbation of a
    // multiple of the identity, so J^m has the closed form below.
    const double theta = 1.3, gamma = 0.6, sigma = 0.8, dt = 1e-3;
    const std::size_t N = 8, S = 200, ns = 7, j = 2;
    const auto model = make_mean_field_ou(theta, gamma, sigma);
    const PathRecord path = simulate_path(*model, N, S, dt, 21, 0);
    const Tangents1 tf = propagate_first(path, *model, {{ns, j}}, false);

    const double l0 = 1.0 - theta * dt;
    const double l1 = 1.0 - (theta - gamma) * dt;
    const auto m = double(S - ns - 1); // identity step at the anchor node
    const double p0 = std::pow(l0, m), p1 = std::pow(l1, m);
    for (std::size_t i = 0; i < N; ++i) {
        const double want = sigma * ((i == j ? p0 : 0.0) + (p1 - p0) / double(N));
        CHECK(tf.final_row(0)[i] == Catch::Approx(want).epsilon(1e-12));
    }

    // continuous-time limit: exp(tau A), A = -theta I + (gamma/N) ones
    const double tau = m * dt;
    const double e0 = std::exp(-theta * tau), e1 = std::exp(-(theta - gamma) * tau);
    for (std::size_t i = 0; i < N; ++i) {
        const double want = sigma * ((i == j ? e0 : 0.0) + (e1 - e0) / double(N));
        CHECK(tf.final_row(0)[i] == Catch::Approx(want).epsilon(5e-3));
    }
}

TEST_CASE("history and streaming propagation agree") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const PathRecord path = simulate_path(*model, 6, 30, 0.01, 4, 1);
    const std::vector<Direction> dirs = {{0, 0}, {11, 3}, {30, 5}};
    const Tangents1 hist = propagate_first(path, *model, dirs, true);
    const Tangents1 flat = propagate_first(path, *model, dirs, false);
    for (std::size_t x = 0; x < dirs.size(); ++x)
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(hist.final_row(x)[i] == flat.final_row(x)[i]);

    // anchor rows hold sigma(X) on the direction particle only
    const double sig = model->diffusion(path.state(11, 3), path.cloud_at(11));
    CHECK(hist.row(1, 11)[3] == sig);
    CHECK(hist.row(1, 11)[0] == 0.0);
    CHECK(hist.row(1, 10)[3] == 0.0);               // zero strictly before
    CHECK(hist.row(1, 12)[3] == hist.row(1, 11)[3]); // identity step after

    CHECK_THROWS_AS(propagate_first(path, *model, {{31, 0}}, false), InvalidInput);
    CHECK_THROWS_AS(propagate_first(path, *model, {{0, 6}}, false), InvalidInput);
}

TEST_CASE("first tangents are the O(h) limit of increment bumps") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const std::size_t N = 4, S = 30;
    const double dt = 0.01;
    const PathRecord path = simulate_path(*model, N, S, dt, 33, 0);
    const Direction d{5, 1};
    const Tangents1 tf = propagate_first(path, *model, {d}, false);
    const std::vector<double> base = terminal_with_bumps(*model, path, {});

    auto fd_err = [&](double h) {
        const std::vector<double> up = terminal_with_bumps(*model, path, {{d, h}});
        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            err = std::max(err, std::abs((up[i] - base[i]) / h - tf.final_row(0)[i]));
        return err;
    };
    const double e1 = fd_err(1e-3), e2 = fd_err(5e-4);
    CHECK(e1 / e2 == Catch::Approx(2.0).margin(0.5));
    CHECK(e2 < 5e-5);
}

TEST_CASE("second tangents are the O(h) limit of double bumps") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const std::size_t N = 4, S = 30;
    const double dt = 0.01;
    const PathRecord path = simulate_path(*model, N, S, dt, 57, 0);
    const Direction r{3, 0}, s{12, 2};
    const Tangents1 tf1 = propagate_first(path, *model, {r, s}, true);
    const Tangents2 tf2 = propagate_second(path, *model, tf1, {{0, 1}});

    auto fd_row = [&](double h) {
        const auto xpp = terminal_with_bumps(*model, path, {{r, h}, {s, h}});
        const auto xp0 = terminal_with_bumps(*model, path, {{r, h}});
        const auto x0p = terminal_with_bumps(*model, path, {{s, h}});
        const auto x00 = terminal_with_bumps(*model, path, {});
        std::vector<double> w(N);
        for (std::size_t i = 0; i < N; ++i)
            w[i] = (xpp[i] - xp0[i] - x0p[i] + x00[i]) / (h * h);
        return w;
    };
    auto err_at = [&](double h) {
        const auto w = fd_row(h);
        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            err = std::max(err, std::abs(w[i] - tf2.final_row(0)[i]));
        return err;
    };
    const double e1 = err_at(1e-3), e2 = err_at(5e-4);
    CHECK(e1 / e2 == Catch::Approx(2.0).margin(0.6));
    CHECK(e2 < 1e-4);

    // the mixed derivative cannot vanish here: sigma depends on the state
    double mag = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        mag = std::max(mag, std::abs(tf2.final_row(0)[i]));
    CHECK(mag > 1e-8);
}

TEST_CASE("pair order does not matter") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const PathRecord path = simulate_path(*model, 5, 24, 0.01, 8, 0);
    const std::vector<Direction> dirs = {{4, 1}, {10, 3}, {10, 0}};
    const Tangents1 tf1 = propagate_first(path, *model, dirs, true);

    const Tangents2 ab = propagate_second(path, *model, tf1, {{0, 1}, {2, 1}});
    const Tangents2 ba = propagate_second(path, *model, tf1, {{1, 0}, {1, 2}});
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(ab.final_row(p)[i] == Catch::Approx(ba.final_row(p)[i]).epsilon(1e-13).margin(1e-15));
}

TEST_CASE("every second derivative vanishes on the linear model") {
    const auto model = make_mean_field_ou(1.0, 0.4, 0.9);
    const PathRecord path = simulate_path(*model, 6, 32, 0.01, 3, 0);
    std::vector<Direction> dirs;
    for (std::size_t n : {std::size_t(0), std::size_t(8), std::size_t(20)})
        for (std::size_t j = 0; j < 6; ++j) dirs.push_back({n, j});
    const Tangents1 tf1 = propagate_first(path, *model, dirs, true);

    std::size_t visited = 0;
    double maxabs = 0.0;
    const Tangents2 tf2 = propagate_second(
        path, *model, tf1, all_canonical_pairs(dirs),
        [&](std::size_t, std::size_t, const double* w) {
            ++visited;
            for (std::size_t i = 0; i < 6; ++i) maxabs = std::max(maxabs, std::abs(w[i]));
        });
    CHECK(visited > 0);
    CHECK(maxabs == 0.0);
    for (double v : tf2.final_vals) CHECK(v == 0.0);
}

TEST_CASE("visitor walks every node from the anchor to the horizon") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const PathRecord path = simulate_path(*model, 4, 20, 0.01, 12, 0);
    const std::vector<Direction> dirs = {{2, 0}, {9, 1}};
    const Tangents1 tf1 = propagate_first(path, *model, dirs, true);
    std::map<std::size_t, std::vector<std::size_t>> seen;
    propagate_second(path, *model, tf1, {{0, 1}, {0, 0}},
                     [&](std::size_t p, std::size_t n, const double*) {
                         seen[p].push_back(n);
                     });
    // pair 0 anchors at node 9, pair 1 at node 2; both walk to node 20
    REQUIRE(seen[0].front() == 9);
    REQUIRE(seen[1].front() == 2);
    CHECK(seen[0].back() == 20);
    CHECK(seen[1].back() == 20);
    for (const auto& [p, nodes] : seen)
        for (std::size_t k = 1; k < nodes.size(); ++k)
            CHECK(nodes[k] == nodes[k - 1] + 1);
}

TEST_CASE("assembled DF and D2F follow their definitions") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const TestFunction phi = test_function("cos");
    const std::size_t N = 4;
    const PathRecord path = simulate_path(*model, N, 16, 0.01, 91, 0);
    const std::vector<Direction> dirs = {{0, 0}, {0, 1}, {8, 2}};
    const Tangents1 tf1 = propagate_first(path, *model, dirs, true);
    const auto pairs = all_canonical_pairs(dirs);
    const Tangents2 tf2 = propagate_second(path, *model, tf1, pairs);
    const MalliavinFrame fr = assemble_DF_D2F(path, phi, tf1, tf2);

    const double rtN = std::sqrt(double(N));
    const double* X = path.state_row(16);
    for (std::size_t x = 0; x < dirs.size(); ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            acc += phi.df(X[i]) * tf1.final_row(x)[i];
        CHECK(fr.DF[x] == Catch::Approx(acc / rtN).epsilon(1e-14).margin(1e-16));
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const std::size_t x = pairs[p].rdir, y = pairs[p].sdir;
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            acc += phi.df(X[i]) * tf2.final_row(p)[i] +
                   phi.d2f(X[i]) * tf1.final_row(x)[i] * tf1.final_row(y)[i];
        CHECK(fr.D2F[x * 3 + y] == Catch::Approx(acc / rtN).epsilon(1e-14).margin(1e-16));
        CHECK(fr.D2F[x * 3 + y] == fr.D2F[y * 3 + x]);
    }

    CHECK_THROWS_AS(assemble_DF_D2F(path, phi, tf1, propagate_second(path, *model, tf1, {{0, 1}})),
                    InvalidInput);
}

TEST_CASE("delta estimator equals the brute-force contraction") {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const TestFunction phi = test_function("tanh");
    const std::size_t N = 2, S = 4, R = 3;
    std::vector<Direction> dirs;
    for (std::size_t n : {std::size_t(0), std::size_t(2), std::size_t(4)})
        for (std::size_t j = 0; j < N; ++j) dirs.push_back({n, j});
    const std::size_t K = dirs.size();
    const std::vector<double> w = {0.1, 0.1, 0.2, 0.2, 0.1, 0.1};

    std::vector<MalliavinFrame> frames;
    DeltaEstimator est(K, w);
    for (std::size_t r = 0; r < R; ++r) {
        const PathRecord path = simulate_path(*model, N, S, 0.05, 101, r);
        const Tangents1 tf1 = propagate_first(path, *model, dirs, true);
        const Tangents2 tf2 = propagate_second(path, *model, tf1, all_canonical_pairs(dirs));
        frames.push_back(assemble_DF_D2F(path, phi, tf1, tf2));
        est.add_replicate(frames.back());
    }
    const DeltaResult res = est.finalize();

    // six nested loops, no shortcuts
    double delta = 0.0;
    for (std::size_t x = 0; x < K; ++x)
        for (std::size_t y = 0; y < K; ++y) {
            double ec2 = 0.0, ea2 = 0.0;
            for (const auto& fr : frames) {
                double c = 0.0;
                for (std::size_t z = 0; z < K; ++z)
                    c += fr.D2F[x * K + z] * w[z] * fr.D2F[z * K + y];
                ec2 += c * c / double(R);
                ea2 += fr.DF[x] * fr.DF[x] * fr.DF[y] * fr.DF[y] / double(R);
            }
            delta += w[x] * w[y] * std::sqrt(ec2) * std::sqrt(ea2);
        }
    CHECK(res.delta == Catch::Approx(delta).epsilon(1e-12));
    CHECK(res.se >= 0.0);
    CHECK(res.replicates == R);
}

TEST_CASE("vidotto bound closed form and guards") {
    CHECK(vidotto_bound(0.0, 1.0) == 0.0);
    CHECK(vidotto_bound(2.0, 4.0) == Catch::Approx(std::sqrt(16.0 / (M_PI * 4.0))));
    CHECK_THROWS_AS(vidotto_bound(1.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(vidotto_bound(-1.0, 1.0), InvalidInput);
}

TEST_CASE("decay fit recovers an exact exponential") {
    std::vector<double> tau, mom;
    for (int k = 0; k <= 30; ++k) {
        tau.push_back(0.1 * k);
        mom.push_back(3.0 * std::exp(-1.7 * 0.1 * k));
    }
    const DecayFit fit = fit_decay(tau, mom, 0.5, 2.5);
    CHECK(fit.rate == Catch::Approx(-1.7).epsilon(1e-12));
    CHECK(std::exp(fit.intercept) == Catch::Approx(3.0).epsilon(1e-10));
    CHECK_THROWS_AS(fit_decay(tau, mom, 2.9, 3.0), InvalidInput); // 2 points only
    std::vector<double> bad = mom;
    bad[5] = 0.0;
    CHECK_THROWS_AS(fit_decay(tau, bad, 0.0, 3.0), InvalidInput);
}
