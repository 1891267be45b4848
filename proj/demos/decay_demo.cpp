// Malliavin tangent decay along a single interacting path: perturb particle 0
// at time s = 0 and watch the fourth-moment response die off.

#include <mvfluct/mvfluct.hpp>

#include <cmath>
#include <cstdio>

using namespace mvfluct;

int main() {
    const auto model = make_tanh_interaction(1.0, 0.2, 0.1, 0.55, 0.2);
    const std::size_t N = 32, steps = 2000;
    const double dt = 2e-3;

    const std::size_t reps = 64;
    std::vector<double> m4(steps + 1, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
        const PathRecord path = simulate_path(*model, N, steps, dt, 99, r, {0.0, 1.0});
        const Tangents1 tf = propagate_first(path, *model, {{0, 0}}, true);
        for (std::size_t n = 0; n <= steps; ++n) {
            const double d = tf.row(0, n)[0];
            m4[n] += d * d * d * d / double(reps);
        }
    }

    std::printf("%8s %14s\n", "tau", "E[|D|^4]^(1/4)");
    for (std::size_t n = 0; n <= steps; n += 250)
        std::printf("%8.3f %14.6e\n", double(n) * dt, std::pow(m4[n], 0.25));
    return 0;
}
