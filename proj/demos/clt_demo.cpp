// Quick look at the CLT scaling: empirical fluctuation variance of the
// particle mean against the limiting variance from the backward PDE.

#include <mvfluct/mvfluct.hpp>

#include <cstdio>

using namespace mvfluct;

int main() {
    const auto model = make_mean_field_ou(1.0, 0.5, 1.0);
    const InitialLaw init{0.0, 1.0};
    const TestFunction phi = test_function("tanh");
    const double t = 1.0, dt = 2e-3;
    const auto steps = std::size_t(t / dt);

    const LawFlow lf = law_flow(*model, steps, dt, init);
    const BackwardPdeSolution sol = solve_backward_pde(*model, lf, phi, t, {});
    const double sigma2_lim = limiting_variance(sol, lf, init);
    const double ref = lf.mean_phi(phi, t);

    std::printf("%6s %12s %12s %12s\n", "N", "sigma2_N", "sigma2_lim", "gap");
    for (std::size_t N : {16, 32, 64, 128}) {
        const std::size_t R = 4000;
        const auto values = simulate_observables(*model, N, steps, dt, 7 + N, R, {steps},
                                                 {phi}, init);
        std::vector<double> col(R);
        for (std::size_t r = 0; r < R; ++r) col[r] = values[r][0];
        const EmpiricalVariance ev = empirical_variance(col, N);
        std::printf("%6zu %12.6f %12.6f %+12.6f\n", N, ev.sigma2, sigma2_lim,
                    ev.sigma2 - sigma2_lim);
        (void)ref;
    }
    return 0;
}
