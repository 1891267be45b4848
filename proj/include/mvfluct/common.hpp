#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvfluct {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedCapability : std::runtime_error {
    explicit UnsupportedCapability(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

struct SimulationDiverged : std::runtime_error {
    std::uint64_t replicate;
    std::size_t particle;
    std::size_t step;
    SimulationDiverged(std::uint64_t rep, std::size_t part, std::size_t st)
        : std::runtime_error("simulation diverged: non-finite coordinate, replicate " +
                             std::to_string(rep) + ", particle " + std::to_string(part) +
                             ", step " + std::to_string(st)),
          replicate(rep), particle(part), step(st) {}
};

// Ordinary least squares y ~ a + b x, with the usual residual-based slope
// standard error (needs n >= 3 for a finite se).
struct LinFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t n = 0;
};

inline LinFit ols_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw InvalidInput("ols_fit: need >= 2 points with matching sizes");
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
    mx /= double(n); my /= double(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw InvalidInput("ols_fit: degenerate abscissae");
    LinFit f;
    f.n = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ys[i] - f.intercept - f.slope * xs[i];
            rss += r * r;
        }
        f.slope_se = std::sqrt(rss / double(n - 2) / sxx);
    }
    return f;
}

// Jackknife standard error from leave-one-out estimates.
inline double jackknife_se(const std::vector<double>& loo) {
    const std::size_t n = loo.size();
    if (n < 2) return 0.0;
    double m = 0.0;
    for (double v : loo) m += v;
    m /= double(n);
    double s = 0.0;
    for (double v : loo) s += (v - m) * (v - m);
    return std::sqrt(double(n - 1) / double(n) * s);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw InvalidInput("mean_of: empty");
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 2) throw InvalidInput("sample_variance: need >= 2 samples");
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(n - 1);
}

// Gauss-Hermite rule for the probabilists' weight: sum_i w_i f(z_i) ~ E[f(Z)],
// Z standard normal. Nodes by Newton iteration on the orthonormal physicists'
// recurrence, then rescaled by sqrt(2).
struct GaussHermite {
    std::vector<double> z;
    std::vector<double> w;
};

inline GaussHermite gauss_hermite(std::size_t n) {
    if (n == 0) throw InvalidInput("gauss_hermite: n >= 1");
    GaussHermite rule;
    rule.z.assign(n, 0.0);
    rule.w.assign(n, 0.0);
    const double eps = 3e-15;
    const std::size_t mhalf = (n + 1) / 2;
    double zv = 0.0, zprev = 0.0, zpprev = 0.0;
    for (std::size_t i = 0; i < mhalf; ++i) {
        if (i == 0) {
            zv = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            zv -= 1.14 * std::pow(double(n), 0.426) / zv;
        } else if (i == 2) {
            zv = 1.86 * zv - 0.86 * zpprev;
        } else if (i == 3) {
            zv = 1.91 * zv - 0.91 * zpprev;
        } else {
            zv = 2.0 * zv - zpprev;
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 0.7511255444649425; // pi^{-1/4}
            double p2 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = zv * std::sqrt(2.0 / double(j)) * p2 -
                     std::sqrt(double(j - 1) / double(j)) * p3;
            }
            pp = std::sqrt(2.0 * double(n)) * p2;
            const double dz = p1 / pp;
            zv -= dz;
            if (std::abs(dz) <= eps) break;
        }
        zpprev = zprev;
        zprev = zv;
        rule.z[i] = -zv; // ascending order, negative half first
        rule.z[n - 1 - i] = zv;
        const double wv = 2.0 / (pp * pp);
        rule.w[i] = wv;
        rule.w[n - 1 - i] = wv;
    }
    // physicists' -> probabilists': x = sqrt(2) u, weight /= sqrt(pi)
    const double sqrt2 = std::sqrt(2.0);
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rule.z[i] *= sqrt2;
        rule.w[i] *= inv_sqrt_pi;
        wsum += rule.w[i];
    }
    // renormalize away residual Newton error in the weights
    for (std::size_t i = 0; i < n; ++i) rule.w[i] /= wsum;
    return rule;
}

template <class F>
double gaussian_expectation(const GaussHermite& rule, double mean, double var, F&& f) {
    if (var < 0.0) throw InvalidInput("gaussian_expectation: negative variance");
    const double sd = std::sqrt(var);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.z.size(); ++i)
        s += rule.w[i] * f(mean + sd * rule.z[i]);
    return s;
}

inline double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size() || t.size() < 2)
        throw InvalidInput("trapezoid: bad input sizes");
    double s = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i)
        s += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
    return s;
}

} // namespace mvfluct
