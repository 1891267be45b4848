#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace mvfluct {

// Non-owning view of an empirical cloud (equal weights, one dimension).
struct Cloud {
    const double* x = nullptr;
    std::size_t n = 0;

    Cloud() = default;
    Cloud(const double* data, std::size_t count) : x(data), n(count) {}
    explicit Cloud(const std::vector<double>& v) : x(v.data()), n(v.size()) {}

    double mean() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return n ? s / double(n) : 0.0;
    }
    template <class F>
    double mean_of(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += f(x[i]);
        return n ? s / double(n) : 0.0;
    }
};

// Scalar observable with two derivatives; enough for every statistic here.
struct TestFunction {
    std::string name;
    double (*f)(double) = nullptr;
    double (*df)(double) = nullptr;
    double (*d2f)(double) = nullptr;

    double operator()(double x) const { return f(x); }
};

namespace detail {
inline double tf_id_f(double x) { return x; }
inline double tf_id_d(double) { return 1.0; }
inline double tf_id_d2(double) { return 0.0; }
inline double tf_tanh_f(double x) { return std::tanh(x); }
inline double tf_tanh_d(double x) { const double t = std::tanh(x); return 1.0 - t * t; }
inline double tf_tanh_d2(double x) {
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
}
inline double tf_cos_f(double x) { return std::cos(x); }
inline double tf_cos_d(double x) { return -std::sin(x); }
inline double tf_cos_d2(double x) { return -std::cos(x); }
} // namespace detail

inline TestFunction test_function(const std::string& name) {
    if (name == "id") return {"id", detail::tf_id_f, detail::tf_id_d, detail::tf_id_d2};
    if (name == "tanh") return {"tanh", detail::tf_tanh_f, detail::tf_tanh_d, detail::tf_tanh_d2};
    if (name == "cos") return {"cos", detail::tf_cos_f, detail::tf_cos_d, detail::tf_cos_d2};
    throw InvalidInput("test_function: unknown name '" + name + "' (id, tanh, cos)");
}

// First-order coefficient derivatives at (x, cloud), direction point v.
// dmu_* are Lions derivatives evaluated at v; flat_* are linear-functional
// derivatives (the kernel acting on the measure argument) evaluated at v.
struct FirstDerivs {
    double dx_b = 0.0;
    double dx_sig = 0.0;
    double dmu_b = 0.0;
    double dmu_sig = 0.0;
    double flat_b = 0.0;
    double flat_sig = 0.0;
};

// Second-order blocks at (x, cloud), directions (v, w). The mixed blocks are
// the two Schwarz partners dmu_dx (measure derivative of the state gradient)
// and dx_dmu (state gradient of the measure derivative); dv_dmu differentiates
// the Lions kernel in its direction argument; dmumu is the doubly-measure
// block at (v, w).
struct SecondDerivs {
    double dxx_b = 0.0;
    double dmu_dx_b = 0.0;
    double dx_dmu_b = 0.0;
    double dv_dmu_b = 0.0;
    double dmumu_b = 0.0;
    double dxx_sig = 0.0;
    double dmu_dx_sig = 0.0;
    double dx_dmu_sig = 0.0;
    double dv_dmu_sig = 0.0;
    double dmumu_sig = 0.0;
};

// Per-ensemble batches used by the propagation engines. Kernel matrices are
// row-major N x N with k[i*N + l] = derivative at (X_i, cloud) evaluated at
// direction point X_l. Zero flags let engines skip whole terms.
struct FirstOrderBatch {
    std::size_t N = 0;
    std::vector<double> dx_b, dx_sig;   // N
    std::vector<double> k_b, k_sig;     // N*N Lions kernels, empty if zero
    bool k_b_zero = true;
    bool k_sig_zero = true;
    bool dx_sig_zero = true;
};

struct SecondOrderBatch {
    std::size_t N = 0;
    std::vector<double> dxx_b, dxx_sig;                     // N
    std::vector<double> k_mudx_b, k_dxmu_b, k_vmu_b;        // N*N
    std::vector<double> k_mudx_sig, k_dxmu_sig, k_vmu_sig;  // N*N
    bool b_blocks_zero = true;
    bool sig_blocks_zero = true;
    bool dmumu_zero = true; // doubly-measure blocks for both coefficients
};

// Coefficients of dX = b(X, mu) dt + sigma(X, mu) dB in one dimension with a
// one-dimensional driving noise. The interface carries (d, m) so callers can
// reject models they cannot handle.
class CoefficientModel {
public:
    virtual ~CoefficientModel() = default;

    virtual std::string id() const = 0;
    virtual int dim_state() const { return 1; }
    virtual int dim_noise() const { return 1; }

    virtual double drift(double x, Cloud c) const = 0;
    virtual double diffusion(double x, Cloud c) const = 0;
    virtual FirstDerivs first_derivatives(double x, Cloud c, double v) const = 0;
    virtual SecondDerivs second_derivatives(double x, Cloud c, double v, double w) const = 0;

    virtual bool measure_dependent() const = 0;
    virtual bool sigma_state_dependent() const = 0;
    virtual bool sigma_measure_dependent() const = 0;
    virtual bool second_order_zero() const = 0;
    virtual bool sigma_bounded() const = 0;
    virtual bool drift_bounded() const { return false; }
    // false flags a model whose standing assumptions have not been certified;
    // reports must carry the caveat through.
    virtual bool certified() const { return true; }

    // analytic constants, when the model knows them exactly
    virtual std::optional<double> declared_kappa(int /*p*/) const { return std::nullopt; }
    virtual std::optional<double> declared_gamma() const { return std::nullopt; }
    virtual std::optional<double> declared_m_sigma() const { return std::nullopt; }

    virtual void drift_diffusion_all(const double* X, std::size_t N,
                                     double* b_out, double* sig_out) const {
        Cloud c(X, N);
        for (std::size_t i = 0; i < N; ++i) {
            b_out[i] = drift(X[i], c);
            sig_out[i] = diffusion(X[i], c);
        }
    }

    virtual void first_order_batch(const double* X, std::size_t N,
                                   FirstOrderBatch& out) const {
        Cloud c(X, N);
        out.N = N;
        out.dx_b.assign(N, 0.0);
        out.dx_sig.assign(N, 0.0);
        out.k_b_zero = !measure_dependent();
        out.k_sig_zero = !sigma_measure_dependent();
        out.dx_sig_zero = !sigma_state_dependent();
        out.k_b.assign(out.k_b_zero ? 0 : N * N, 0.0);
        out.k_sig.assign(out.k_sig_zero ? 0 : N * N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            if (out.k_b_zero && out.k_sig_zero) {
                const FirstDerivs d = first_derivatives(X[i], c, X[i]);
                out.dx_b[i] = d.dx_b;
                out.dx_sig[i] = d.dx_sig;
            } else {
                for (std::size_t l = 0; l < N; ++l) {
                    const FirstDerivs d = first_derivatives(X[i], c, X[l]);
                    if (l == 0) {
                        out.dx_b[i] = d.dx_b;
                        out.dx_sig[i] = d.dx_sig;
                    }
                    if (!out.k_b_zero) out.k_b[i * N + l] = d.dmu_b;
                    if (!out.k_sig_zero) out.k_sig[i * N + l] = d.dmu_sig;
                }
            }
        }
    }

    virtual void second_order_batch(const double* X, std::size_t N,
                                    SecondOrderBatch& out) const {
        Cloud c(X, N);
        out.N = N;
        out.dxx_b.assign(N, 0.0);
        out.dxx_sig.assign(N, 0.0);
        const bool all_zero = second_order_zero();
        out.b_blocks_zero = all_zero;
        out.sig_blocks_zero = all_zero;
        out.dmumu_zero = true;
        if (all_zero) {
            out.k_mudx_b.clear(); out.k_dxmu_b.clear(); out.k_vmu_b.clear();
            out.k_mudx_sig.clear(); out.k_dxmu_sig.clear(); out.k_vmu_sig.clear();
            return;
        }
        out.k_mudx_b.assign(N * N, 0.0);
        out.k_dxmu_b.assign(N * N, 0.0);
        out.k_vmu_b.assign(N * N, 0.0);
        out.k_mudx_sig.assign(N * N, 0.0);
        out.k_dxmu_sig.assign(N * N, 0.0);
        out.k_vmu_sig.assign(N * N, 0.0);
        bool any_sig = false, any_mumu = false;
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t l = 0; l < N; ++l) {
                const SecondDerivs d = second_derivatives(X[i], c, X[l], X[l]);
                if (l == 0) {
                    out.dxx_b[i] = d.dxx_b;
                    out.dxx_sig[i] = d.dxx_sig;
                }
                out.k_mudx_b[i * N + l] = d.dmu_dx_b;
                out.k_dxmu_b[i * N + l] = d.dx_dmu_b;
                out.k_vmu_b[i * N + l] = d.dv_dmu_b;
                out.k_mudx_sig[i * N + l] = d.dmu_dx_sig;
                out.k_dxmu_sig[i * N + l] = d.dx_dmu_sig;
                out.k_vmu_sig[i * N + l] = d.dv_dmu_sig;
                if (d.dmu_dx_sig != 0.0 || d.dx_dmu_sig != 0.0 || d.dv_dmu_sig != 0.0)
                    any_sig = true;
                if (d.dmumu_b != 0.0 || d.dmumu_sig != 0.0) any_mumu = true;
            }
            if (out.dxx_sig[i] != 0.0) any_sig = true;
        }
        out.sig_blocks_zero = !any_sig;
        out.dmumu_zero = !any_mumu;
    }
};

// Linear mean-field model: b = -theta x + gamma_int <mu, id>, sigma constant.
// Everything about it is closed-form, which makes it the reference model for
// oracles: kappa_p = 2 theta for every p, gamma = |gamma_int|, M_sigma = 0.
class MeanFieldOU final : public CoefficientModel {
public:
    double theta, gamma_int, sigma_const;

    MeanFieldOU(double theta_, double gamma_int_, double sigma_)
        : theta(theta_), gamma_int(gamma_int_), sigma_const(sigma_) {
        if (sigma_ < 0.0) throw InvalidInput("MEAN_FIELD_OU: sigma >= 0 required");
    }

    std::string id() const override { return "MEAN_FIELD_OU"; }

    double drift(double x, Cloud c) const override {
        return -theta * x + gamma_int * c.mean();
    }
    double diffusion(double, Cloud) const override { return sigma_const; }

    FirstDerivs first_derivatives(double, Cloud, double v) const override {
        FirstDerivs d;
        d.dx_b = -theta;
        d.dmu_b = gamma_int;
        d.flat_b = gamma_int * v;
        return d;
    }
    SecondDerivs second_derivatives(double, Cloud, double, double) const override {
        return {};
    }

    bool measure_dependent() const override { return gamma_int != 0.0; }
    bool sigma_state_dependent() const override { return false; }
    bool sigma_measure_dependent() const override { return false; }
    bool second_order_zero() const override { return true; }
    bool sigma_bounded() const override { return true; }

    std::optional<double> declared_kappa(int) const override { return 2.0 * theta; }
    std::optional<double> declared_gamma() const override { return std::abs(gamma_int); }
    std::optional<double> declared_m_sigma() const override { return 0.0; }

    void drift_diffusion_all(const double* X, std::size_t N,
                             double* b_out, double* sig_out) const override {
        double m = 0.0;
        for (std::size_t i = 0; i < N; ++i) m += X[i];
        m = gamma_int * (N ? m / double(N) : 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            b_out[i] = -theta * X[i] + m;
            sig_out[i] = sigma_const;
        }
    }
};

// Nonlinear single-particle drift with a bounded smooth interaction kernel and
// state-dependent diffusion:
//   b = -theta x + eps sin x + gamma_int (1/N) sum_l tanh(x - X_l)
//   sigma = sigma0 + sigma1 cos x
class TanhInteraction final : public CoefficientModel {
public:
    double theta, eps, gamma_int, sigma0, sigma1;

    TanhInteraction(double theta_, double eps_, double gamma_int_, double sigma0_,
                    double sigma1_)
        : theta(theta_), eps(eps_), gamma_int(gamma_int_), sigma0(sigma0_),
          sigma1(sigma1_) {}

    std::string id() const override { return "TANH_INTERACTION"; }

    static double sech2(double u) {
        const double c = std::cosh(u);
        return 1.0 / (c * c);
    }

    double drift(double x, Cloud c) const override {
        const double inter = c.mean_of([x](double y) { return std::tanh(x - y); });
        return -theta * x + eps * std::sin(x) + gamma_int * inter;
    }
    double diffusion(double x, Cloud) const override {
        return sigma0 + sigma1 * std::cos(x);
    }

    FirstDerivs first_derivatives(double x, Cloud c, double v) const override {
        FirstDerivs d;
        const double meansech = c.mean_of([x](double y) { return sech2(x - y); });
        d.dx_b = -theta + eps * std::cos(x) + gamma_int * meansech;
        d.dx_sig = -sigma1 * std::sin(x);
        d.dmu_b = -gamma_int * sech2(x - v);
        d.flat_b = gamma_int * std::tanh(x - v);
        return d;
    }

    SecondDerivs second_derivatives(double x, Cloud c, double v, double) const override {
        SecondDerivs d;
        const double meands = c.mean_of([x](double y) {
            const double u = x - y;
            return -2.0 * sech2(u) * std::tanh(u);
        });
        d.dxx_b = -eps * std::sin(x) + gamma_int * meands;
        const double s2 = sech2(x - v);
        const double th = std::tanh(x - v);
        d.dmu_dx_b = 2.0 * gamma_int * s2 * th;
        d.dx_dmu_b = 2.0 * gamma_int * s2 * th;
        d.dv_dmu_b = -2.0 * gamma_int * s2 * th;
        d.dxx_sig = -sigma1 * std::cos(x);
        return d;
    }

    bool measure_dependent() const override { return gamma_int != 0.0; }
    bool sigma_state_dependent() const override { return sigma1 != 0.0; }
    bool sigma_measure_dependent() const override { return false; }
    bool second_order_zero() const override { return false; }
    bool sigma_bounded() const override { return true; }

    std::optional<double> declared_gamma() const override { return std::abs(gamma_int); }
    std::optional<double> declared_m_sigma() const override { return std::abs(sigma1); }
};

// Gradient interaction with polynomial potentials, constant diffusion:
//   b = -U'(x) - (1/N) sum_l W'(x - X_l),  sigma = const.
// Coefficients are user-supplied, so no standing assumption is certified;
// reports must treat constants as sampled estimates only.
class ConvexPotential final : public CoefficientModel {
public:
    std::vector<double> u_coeffs, w_coeffs; // U(x) = sum_k u[k] x^k, same for W
    double sigma_const;

    ConvexPotential(std::vector<double> u, std::vector<double> w, double sigma_)
        : u_coeffs(std::move(u)), w_coeffs(std::move(w)), sigma_const(sigma_) {
        if (sigma_ < 0.0) throw InvalidInput("CONVEX_POTENTIAL: sigma >= 0 required");
    }

    std::string id() const override { return "CONVEX_POTENTIAL"; }

    static double poly_deriv(const std::vector<double>& c, int order, double x) {
        // Horner over the derivative's coefficients fall(k) c_k, k >= order
        const int n = int(c.size());
        double acc = 0.0;
        for (int k = n - 1; k >= order; --k) {
            double fall = 1.0;
            for (int j = 0; j < order; ++j) fall *= double(k - j);
            acc = acc * x + fall * c[std::size_t(k)];
        }
        return acc;
    }

    double drift(double x, Cloud c) const override {
        const double inter = c.mean_of([&](double y) { return poly_deriv(w_coeffs, 1, x - y); });
        return -poly_deriv(u_coeffs, 1, x) - inter;
    }
    double diffusion(double, Cloud) const override { return sigma_const; }

    FirstDerivs first_derivatives(double x, Cloud c, double v) const override {
        FirstDerivs d;
        const double inter2 = c.mean_of([&](double y) { return poly_deriv(w_coeffs, 2, x - y); });
        d.dx_b = -poly_deriv(u_coeffs, 2, x) - inter2;
        d.dmu_b = poly_deriv(w_coeffs, 2, x - v);
        d.flat_b = -poly_deriv(w_coeffs, 1, x - v);
        return d;
    }

    SecondDerivs second_derivatives(double x, Cloud c, double v, double) const override {
        SecondDerivs d;
        const double inter3 = c.mean_of([&](double y) { return poly_deriv(w_coeffs, 3, x - y); });
        d.dxx_b = -poly_deriv(u_coeffs, 3, x) - inter3;
        const double w3 = poly_deriv(w_coeffs, 3, x - v);
        d.dmu_dx_b = w3;
        d.dx_dmu_b = w3;
        d.dv_dmu_b = -w3;
        return d;
    }

    bool measure_dependent() const override {
        for (std::size_t k = 2; k < w_coeffs.size(); ++k)
            if (w_coeffs[k] != 0.0) return true;
        return false;
    }
    bool sigma_state_dependent() const override { return false; }
    bool sigma_measure_dependent() const override { return false; }
    bool second_order_zero() const override {
        for (std::size_t k = 3; k < u_coeffs.size(); ++k)
            if (u_coeffs[k] != 0.0) return false;
        for (std::size_t k = 3; k < w_coeffs.size(); ++k)
            if (w_coeffs[k] != 0.0) return false;
        return true;
    }
    bool sigma_bounded() const override { return true; }
    bool certified() const override { return false; }
};

inline std::unique_ptr<CoefficientModel> make_mean_field_ou(double theta, double gamma_int,
                                                            double sigma) {
    return std::make_unique<MeanFieldOU>(theta, gamma_int, sigma);
}
inline std::unique_ptr<CoefficientModel> make_tanh_interaction(double theta, double eps,
                                                               double gamma_int,
                                                               double sigma0,
                                                               double sigma1) {
    return std::make_unique<TanhInteraction>(theta, eps, gamma_int, sigma0, sigma1);
}
inline std::unique_ptr<CoefficientModel> make_convex_potential(std::vector<double> u,
                                                               std::vector<double> w,
                                                               double sigma) {
    return std::make_unique<ConvexPotential>(std::move(u), std::move(w), sigma);
}

// Finite-difference consistency audit of the declared derivatives. State
// derivatives use central differences (step h_state); measure derivatives are
// checked against one-sided particle bumps (step h_bump), which links the
// Lions derivative to the empirical-measure dependence:
//   [f(x, bumped cloud) - f(x, cloud)] / h ~ (1/N) dmu_f(x, mu)(X_l).
// The linear-functional kernel is tied to the Lions derivative through
// d/dv flat(v) = dmu(v).
struct ConsistencyCheck {
    std::string name;
    double max_err = 0.0;
};

struct ConsistencyReport {
    std::vector<ConsistencyCheck> checks;
    double max_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline ConsistencyReport check_derivative_consistency(const CoefficientModel& model,
                                                      int trials = 32,
                                                      double tolerance = 1e-3,
                                                      double h_state = 1e-5,
                                                      double h_bump = 1e-4,
                                                      std::uint64_t seed = 1234) {
    NormalRng rng(seed, 0, STREAM_SEARCH);
    std::map<std::string, double> err;
    auto note = [&](const std::string& name, double fd, double an) {
        const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
        double& slot = err[name];
        slot = std::max(slot, std::abs(fd - an) / scale);
    };

    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t N = 4 + rng.below(29);
        std::vector<double> cloud(N);
        for (auto& y : cloud) y = 1.5 * rng.normal();
        const double x = 3.0 * (2.0 * rng.uniform() - 1.0);
        const std::size_t l = rng.below(N);
        const double v = cloud[l];
        Cloud c(cloud);

        const double h = h_state;
        const FirstDerivs fd1 = model.first_derivatives(x, c, v);
        const SecondDerivs fd2 = model.second_derivatives(x, c, v, v);

        // state derivatives of the coefficients
        note("dx_b", (model.drift(x + h, c) - model.drift(x - h, c)) / (2.0 * h), fd1.dx_b);
        note("dx_sig", (model.diffusion(x + h, c) - model.diffusion(x - h, c)) / (2.0 * h),
             fd1.dx_sig);
        const double h2 = 1e-4;
        note("dxx_b",
             (model.drift(x + h2, c) - 2.0 * model.drift(x, c) + model.drift(x - h2, c)) /
                 (h2 * h2),
             fd2.dxx_b);
        note("dxx_sig",
             (model.diffusion(x + h2, c) - 2.0 * model.diffusion(x, c) +
              model.diffusion(x - h2, c)) /
                 (h2 * h2),
             fd2.dxx_sig);

        // state derivative of the Lions kernel
        note("dx_dmu_b",
             (model.first_derivatives(x + h, c, v).dmu_b -
              model.first_derivatives(x - h, c, v).dmu_b) /
                 (2.0 * h),
             fd2.dx_dmu_b);
        // direction derivative of the Lions kernel
        note("dv_dmu_b",
             (model.first_derivatives(x, c, v + h).dmu_b -
              model.first_derivatives(x, c, v - h).dmu_b) /
                 (2.0 * h),
             fd2.dv_dmu_b);
        // linear-functional kernel ties to the Lions kernel
        note("flat_vs_lions_b",
             (model.first_derivatives(x, c, v + h).flat_b -
              model.first_derivatives(x, c, v - h).flat_b) /
                 (2.0 * h),
             fd1.dmu_b);
        note("flat_vs_lions_sig",
             (model.first_derivatives(x, c, v + h).flat_sig -
              model.first_derivatives(x, c, v - h).flat_sig) /
                 (2.0 * h),
             fd1.dmu_sig);

        // particle bumps probe the empirical-measure dependence directly
        std::vector<double> bumped = cloud;
        bumped[l] += h_bump;
        Cloud cb(bumped);
        note("bump_b", (model.drift(x, cb) - model.drift(x, c)) / h_bump,
             fd1.dmu_b / double(N));
        note("bump_sig", (model.diffusion(x, cb) - model.diffusion(x, c)) / h_bump,
             fd1.dmu_sig / double(N));
        note("bump_dx_b",
             (model.first_derivatives(x, cb, v).dx_b -
              model.first_derivatives(x, c, v).dx_b) /
                 h_bump,
             fd2.dmu_dx_b / double(N));
    }

    ConsistencyReport rep;
    rep.tolerance = tolerance;
    for (const auto& [name, e] : err) {
        rep.checks.push_back({name, e});
        rep.max_err = std::max(rep.max_err, e);
    }
    rep.pass = rep.max_err <= tolerance;
    return rep;
}

} // namespace mvfluct
