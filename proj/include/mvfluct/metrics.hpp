#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "common.hpp"

namespace mvfluct {

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Acklam's rational approximation with one Halley refinement against the
// erfc-based cdf; absolute error < 1e-15 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p in (0,1) required");
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {
// I(z) = int_{-inf}^z Phi(s) ds = z Phi(z) + phi(z); the antiderivative that
// makes the Gaussian-CDF integrals below closed-form.
inline double cdf_antideriv(double z) {
    return z * normal_cdf(z) + normal_pdf(z);
}
} // namespace detail

// Exact 1-Wasserstein distance between the empirical measure of `samples` and
// N(mean, sigma2), as the L1 distance between CDFs. Each constant piece of the
// empirical CDF is integrated against Phi in closed form, splitting at the
// crossing point sigma * Phi^{-1}(k/n), so no quadrature error enters.
inline double w1_empirical_vs_gaussian(std::vector<double> samples, double sigma2,
                                       double mean = 0.0) {
    if (samples.empty()) throw InvalidInput("w1_empirical_vs_gaussian: no samples");
    if (sigma2 <= 0.0) throw InvalidInput("w1_empirical_vs_gaussian: sigma2 > 0 required");
    const double sd = std::sqrt(sigma2);
    for (auto& s : samples) s = (s - mean) / sd;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    using detail::cdf_antideriv;

    double w = cdf_antideriv(samples.front()) + cdf_antideriv(-samples.back());
    for (std::size_t k = 1; k < n; ++k) {
        const double a = samples[k - 1];
        const double b = samples[k];
        if (b <= a) continue;
        const double c = double(k) / double(n);
        double m = normal_quantile(c);
        m = std::min(std::max(m, a), b);
        const double left = c * (m - a) - (cdf_antideriv(m) - cdf_antideriv(a));
        const double right = (cdf_antideriv(b) - cdf_antideriv(m)) - c * (b - m);
        w += std::max(left, 0.0) + std::max(right, 0.0);
    }
    return sd * w;
}

// W1 between two centered Gaussians: the quantile coupling is monotone, so the
// distance is E|Z| |sd1 - sd2| = sqrt(2/pi) |sd1 - sd2|.
inline double w1_gaussians(double var1, double var2) {
    if (var1 < 0.0 || var2 < 0.0) throw InvalidInput("w1_gaussians: negative variance");
    return std::sqrt(2.0 / M_PI) * std::abs(std::sqrt(var1) - std::sqrt(var2));
}

// Delete-group jackknife standard error for the W1 statistic (leave-one-out
// would need n re-sorts; groups keep it cheap and the functional is smooth).
inline double w1_group_jackknife_se(const std::vector<double>& samples, double sigma2,
                                    std::size_t groups = 20) {
    const std::size_t n = samples.size();
    if (n < 2 * groups) groups = std::max<std::size_t>(2, n / 2);
    std::vector<double> theta(groups);
    std::vector<double> kept;
    kept.reserve(n);
    for (std::size_t g = 0; g < groups; ++g) {
        kept.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (i % groups != g) kept.push_back(samples[i]);
        theta[g] = w1_empirical_vs_gaussian(kept, sigma2);
    }
    double m = 0.0;
    for (double t : theta) m += t;
    m /= double(groups);
    double s = 0.0;
    for (double t : theta) s += (t - m) * (t - m);
    return std::sqrt(double(groups - 1) / double(groups) * s);
}

// Log-log convergence-rate fit: slope of log W1 against log N with a normal
// 95% confidence interval on the slope.
struct RateFit {
    std::vector<double> Ns;
    std::vector<double> values;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline RateFit fit_rate(const std::vector<double>& Ns, const std::vector<double>& values) {
    if (Ns.size() != values.size() || Ns.size() < 2)
        throw InvalidInput("fit_rate: need >= 2 matched points");
    std::vector<double> lx(Ns.size()), ly(Ns.size());
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        if (Ns[i] <= 0.0 || values[i] <= 0.0)
            throw InvalidInput("fit_rate: inputs must be positive");
        lx[i] = std::log(Ns[i]);
        ly[i] = std::log(values[i]);
    }
    const LinFit f = ols_fit(lx, ly);
    RateFit rf;
    rf.Ns = Ns;
    rf.values = values;
    rf.slope = f.slope;
    rf.intercept = f.intercept;
    rf.slope_se = f.slope_se;
    rf.ci_lo = f.slope - 1.96 * f.slope_se;
    rf.ci_hi = f.slope + 1.96 * f.slope_se;
    return rf;
}

} // namespace mvfluct
