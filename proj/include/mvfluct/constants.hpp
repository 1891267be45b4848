#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "simulate.hpp"

namespace mvfluct {

namespace detail {

// Nelder-Mead on R^dim, deterministic, no restarts. Good enough to polish the
// random-search winners; the callers keep the sampled winner as a fallback.
template <class F>
std::pair<std::vector<double>, double> nelder_mead(F&& f, std::vector<double> x0,
                                                   double step, std::size_t iters) {
    const std::size_t dim = x0.size();
    std::vector<std::vector<double>> pts(dim + 1, x0);
    std::vector<double> val(dim + 1);
    for (std::size_t i = 0; i < dim; ++i) pts[i + 1][i] += step;
    for (std::size_t i = 0; i <= dim; ++i) val[i] = f(pts[i]);

    for (std::size_t it = 0; it < iters; ++it) {
        // order
        std::vector<std::size_t> idx(dim + 1);
        for (std::size_t i = 0; i <= dim; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return val[a] < val[b]; });
        std::vector<std::vector<double>> p2(dim + 1);
        std::vector<double> v2(dim + 1);
        for (std::size_t i = 0; i <= dim; ++i) { p2[i] = pts[idx[i]]; v2[i] = val[idx[i]]; }
        pts.swap(p2); val.swap(v2);
        if (std::abs(val[dim] - val[0]) < 1e-15 * (1.0 + std::abs(val[0]))) break;

        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) centroid[j] += pts[i][j] / double(dim);

        auto blend = [&](double t) {
            std::vector<double> p(dim);
            for (std::size_t j = 0; j < dim; ++j)
                p[j] = centroid[j] + t * (centroid[j] - pts[dim][j]);
            return p;
        };
        auto xr = blend(1.0);
        const double fr = f(xr);
        if (fr < val[0]) {
            auto xe = blend(2.0);
            const double fe = f(xe);
            if (fe < fr) { pts[dim] = xe; val[dim] = fe; }
            else { pts[dim] = xr; val[dim] = fr; }
        } else if (fr < val[dim - 1]) {
            pts[dim] = xr; val[dim] = fr;
        } else {
            auto xc = blend(fr < val[dim] ? 0.5 : -0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, val[dim])) { pts[dim] = xc; val[dim] = fc; }
            else {
                for (std::size_t i = 1; i <= dim; ++i) {
                    for (std::size_t j = 0; j < dim; ++j)
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    val[i] = f(pts[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= dim; ++i)
        if (val[i] < val[best]) best = i;
    return {pts[best], val[best]};
}

} // namespace detail

struct KappaOptions {
    double box_lo = -10.0;
    double box_hi = 10.0;
    std::size_t n_samples = 20000;
    std::size_t nm_iters = 400;
    std::uint64_t seed = 4242;
    std::size_t pool_n = 128;
    std::size_t pool_steps = 500;
    double pool_dt = 0.01;
};

// Cloud pool for the searches: snapshots of the model's own flow started from
// N(0,1), plus static Gaussian clouds as a fallback if that flow blows up for
// a user-supplied model.
inline std::vector<std::vector<double>> kappa_cloud_pool(const CoefficientModel& model,
                                                         const KappaOptions& opt) {
    std::vector<std::vector<double>> pool;
    try {
        PathRecord path = simulate_path(model, opt.pool_n, opt.pool_steps, opt.pool_dt,
                                        opt.seed, 0);
        for (std::size_t frac : {0, 5, 10, 20, 40, 70, 100}) {
            const std::size_t n = frac * opt.pool_steps / 100;
            const double* row = path.state_row(n);
            pool.emplace_back(row, row + path.N);
        }
    } catch (const SimulationDiverged&) {
        NormalRng rng(opt.seed, 1, STREAM_SEARCH);
        for (double scale : {0.5, 1.0, 2.0}) {
            std::vector<double> c(opt.pool_n);
            for (auto& y : c) y = scale * rng.normal();
            pool.push_back(std::move(c));
        }
    }
    return pool;
}

struct KappaEstimate {
    int p = 2;
    double value = 0.0;
    std::optional<double> declared;
    double arg_x = 0.0, arg_y = 0.0;
    std::string family; // "flow" or "atom"
};

namespace detail {

// q_p(x, y, mu) decomposes as A + (p-1) B with
//   A = -2 (b(x,mu) - b(y,mu)) / (x - y)
//   B = -((sigma(x,mu) - sigma(y,mu)) / (x - y))^2
inline void kappa_quotient(const CoefficientModel& model, double x, double y, Cloud c,
                           double& A, double& B) {
    const double d = x - y;
    A = -2.0 * (model.drift(x, c) - model.drift(y, c)) / d;
    const double ds = (model.diffusion(x, c) - model.diffusion(y, c)) / d;
    B = -ds * ds;
}

} // namespace detail

// Dissipativity profile over a whole set of orders in one sweep: every sample
// evaluates both A and B once and updates all p simultaneously. Random search
// over two cloud families (flow snapshots, single atoms), then Nelder-Mead
// polish of the winners: over (midpoint, log10 gap, atom site) for the atom
// family and (midpoint, log10 gap) at the winning flow cloud.
inline std::map<int, KappaEstimate> kappa_profile(const CoefficientModel& model,
                                                  const std::vector<int>& pset,
                                                  const KappaOptions& opt = {}) {
    if (pset.empty()) throw InvalidInput("kappa_profile: empty order set");
    const auto pool = kappa_cloud_pool(model, opt);
    NormalRng rng(opt.seed, 2, STREAM_SEARCH);
    const double width = opt.box_hi - opt.box_lo;

    struct Best {
        double q = std::numeric_limits<double>::infinity();
        double x = 0.0, y = 0.0, atom = 0.0;
        bool is_atom = false;
        std::size_t pool_idx = 0;
    };
    std::map<int, Best> best;
    for (int p : pset) best[p] = {};

    auto clamp_box = [&](double v) { return std::min(std::max(v, opt.box_lo), opt.box_hi); };

    for (std::size_t k = 0; k < opt.n_samples; ++k) {
        double x, y;
        if (k % 2 == 0) {
            x = opt.box_lo + width * rng.uniform();
            y = opt.box_lo + width * rng.uniform();
            if (std::abs(x - y) < 1e-9) continue;
        } else {
            // log-uniform gap around a uniform midpoint; the infimum often
            // lives in the gap -> 0 limit
            const double z = opt.box_lo + width * rng.uniform();
            const double gap = std::pow(10.0, -6.0 + 7.0 * rng.uniform());
            x = clamp_box(z + 0.5 * gap);
            y = clamp_box(z - 0.5 * gap);
            if (std::abs(x - y) < 1e-12) continue;
        }
        const bool atom_family = (k % 3 == 0);
        double atom = 0.0;
        Cloud c;
        if (atom_family) {
            atom = opt.box_lo + width * rng.uniform();
            c = Cloud(&atom, 1);
        } else {
            const auto& pc = pool[k % pool.size()];
            c = Cloud(pc);
        }
        double A, B;
        detail::kappa_quotient(model, x, y, c, A, B);
        for (int p : pset) {
            const double q = A + double(p - 1) * B;
            Best& b = best[p];
            if (q < b.q) {
                b.q = q;
                b.x = x; b.y = y;
                b.is_atom = atom_family;
                b.atom = atom;
                b.pool_idx = atom_family ? 0 : (k % pool.size());
            }
        }
    }

    std::map<int, KappaEstimate> out;
    for (int p : pset) {
        const Best& b = best[p];
        double q_min = b.q;
        double ax = b.x, ay = b.y;
        std::string family = b.is_atom ? "atom" : "flow";

        auto eval_atom = [&](const std::vector<double>& par) {
            const double z = clamp_box(par[0]);
            const double gap = std::pow(10.0, std::min(std::max(par[1], -9.0), 1.0));
            const double atom = clamp_box(par[2]);
            const double x = clamp_box(z + 0.5 * gap);
            const double y = clamp_box(z - 0.5 * gap);
            if (std::abs(x - y) < 1e-12) return 1e300;
            Cloud c(&atom, 1);
            double A, B;
            detail::kappa_quotient(model, x, y, c, A, B);
            return A + double(p - 1) * B;
        };
        {
            const double z0 = 0.5 * (b.x + b.y);
            const double g0 = std::log10(std::max(std::abs(b.x - b.y), 1e-8));
            const double a0 = b.is_atom ? b.atom : z0;
            auto [par, v] = detail::nelder_mead(eval_atom, {z0, g0, a0}, 0.25, opt.nm_iters);
            if (v < q_min) {
                q_min = v;
                const double gap = std::pow(10.0, std::min(std::max(par[1], -9.0), 1.0));
                ax = clamp_box(clamp_box(par[0]) + 0.5 * gap);
                ay = clamp_box(clamp_box(par[0]) - 0.5 * gap);
                family = "atom";
            }
        }
        if (!b.is_atom) {
            const auto& pc = pool[b.pool_idx];
            auto eval_flow = [&](const std::vector<double>& par) {
                const double z = clamp_box(par[0]);
                const double gap = std::pow(10.0, std::min(std::max(par[1], -9.0), 1.0));
                const double x = clamp_box(z + 0.5 * gap);
                const double y = clamp_box(z - 0.5 * gap);
                if (std::abs(x - y) < 1e-12) return 1e300;
                double A, B;
                detail::kappa_quotient(model, x, y, Cloud(pc), A, B);
                return A + double(p - 1) * B;
            };
            const double z0 = 0.5 * (b.x + b.y);
            const double g0 = std::log10(std::max(std::abs(b.x - b.y), 1e-8));
            auto [par, v] = detail::nelder_mead(eval_flow, {z0, g0}, 0.25, opt.nm_iters);
            if (v < q_min) {
                q_min = v;
                const double gap = std::pow(10.0, std::min(std::max(par[1], -9.0), 1.0));
                ax = clamp_box(clamp_box(par[0]) + 0.5 * gap);
                ay = clamp_box(clamp_box(par[0]) - 0.5 * gap);
                family = "flow";
            }
        }

        KappaEstimate est;
        est.p = p;
        est.value = q_min;
        est.declared = model.declared_kappa(p);
        est.arg_x = ax;
        est.arg_y = ay;
        est.family = family;
        out[p] = est;
    }
    return out;
}

inline KappaEstimate estimate_kappa(const CoefficientModel& model, int p,
                                    const KappaOptions& opt = {}) {
    return kappa_profile(model, {p}, opt).at(p);
}

// Sampled suprema of first- and second-order measure sensitivities over the
// search box, polished with Nelder-Mead ascent.
struct SensitivityEstimates {
    double gamma_hat = 0.0;   // sup |dmu_b| + |dmu_sig|
    double m_sigma_hat = 0.0; // sup |dx_sig|
    double m2_hat = 0.0;      // sup of summed order-2 block magnitudes
    double sigma_sup = 0.0;   // sup |sigma|
};

inline SensitivityEstimates estimate_sensitivities(const CoefficientModel& model,
                                                   const KappaOptions& opt = {}) {
    const auto pool = kappa_cloud_pool(model, opt);
    NormalRng rng(opt.seed, 3, STREAM_SEARCH);
    const double width = opt.box_hi - opt.box_lo;
    auto clamp_box = [&](double v) { return std::min(std::max(v, opt.box_lo), opt.box_hi); };

    auto gamma_at = [&](double x, double v, Cloud c) {
        const FirstDerivs d = model.first_derivatives(x, c, v);
        return std::abs(d.dmu_b) + std::abs(d.dmu_sig);
    };
    auto m2_at = [&](double x, double v, Cloud c) {
        const SecondDerivs d = model.second_derivatives(x, c, v, v);
        const double bsum = std::abs(d.dxx_b) + std::abs(d.dmu_dx_b) +
                            std::abs(d.dx_dmu_b) + std::abs(d.dv_dmu_b) +
                            std::abs(d.dmumu_b);
        const double ssum = std::abs(d.dxx_sig) + std::abs(d.dmu_dx_sig) +
                            std::abs(d.dx_dmu_sig) + std::abs(d.dv_dmu_sig) +
                            std::abs(d.dmumu_sig);
        return bsum + ssum;
    };

    SensitivityEstimates est;
    double bx_g = 0.0, bv_g = 0.0, ba_g = 0.0;
    double bx_m = 0.0;
    double bx_2 = 0.0, bv_2 = 0.0, ba_2 = 0.0;
    double bx_s = 0.0, ba_s = 0.0;
    for (std::size_t k = 0; k < opt.n_samples / 2; ++k) {
        const double x = opt.box_lo + width * rng.uniform();
        const double v = opt.box_lo + width * rng.uniform();
        const bool atom_family = (k % 3 == 0);
        double atom = opt.box_lo + width * rng.uniform();
        Cloud c = atom_family ? Cloud(&atom, 1) : Cloud(pool[k % pool.size()]);
        const double g = gamma_at(x, v, c);
        if (g > est.gamma_hat) { est.gamma_hat = g; bx_g = x; bv_g = v; ba_g = atom; }
        const double m2 = m2_at(x, v, c);
        if (m2 > est.m2_hat) { est.m2_hat = m2; bx_2 = x; bv_2 = v; ba_2 = atom; }
        const FirstDerivs d1 = model.first_derivatives(x, c, v);
        if (std::abs(d1.dx_sig) > est.m_sigma_hat) { est.m_sigma_hat = std::abs(d1.dx_sig); bx_m = x; }
        const double s = std::abs(model.diffusion(x, c));
        if (s > est.sigma_sup) { est.sigma_sup = s; bx_s = x; ba_s = atom; }
    }

    // polish each supremum (atom cloud family; translation structure of the
    // built-ins makes the atom family attain these sups)
    {
        auto neg = [&](const std::vector<double>& par) {
            const double atom = clamp_box(par[2]);
            Cloud c(&atom, 1);
            return -gamma_at(clamp_box(par[0]), clamp_box(par[1]), c);
        };
        auto [par, v] = detail::nelder_mead(neg, {bx_g, bv_g, ba_g}, 0.3, 400);
        est.gamma_hat = std::max(est.gamma_hat, -v);
    }
    {
        auto neg = [&](const std::vector<double>& par) {
            double atom = 0.0;
            Cloud c(&atom, 1);
            const FirstDerivs d = model.first_derivatives(clamp_box(par[0]), c, 0.0);
            return -std::abs(d.dx_sig);
        };
        auto [par, v] = detail::nelder_mead(neg, {bx_m}, 0.3, 400);
        est.m_sigma_hat = std::max(est.m_sigma_hat, -v);
    }
    {
        auto neg = [&](const std::vector<double>& par) {
            const double atom = clamp_box(par[2]);
            Cloud c(&atom, 1);
            return -m2_at(clamp_box(par[0]), clamp_box(par[1]), c);
        };
        auto [par, v] = detail::nelder_mead(neg, {bx_2, bv_2, ba_2}, 0.3, 400);
        est.m2_hat = std::max(est.m2_hat, -v);
    }
    {
        auto neg = [&](const std::vector<double>& par) {
            const double atom = clamp_box(par[1]);
            Cloud c(&atom, 1);
            return -std::abs(model.diffusion(clamp_box(par[0]), c));
        };
        auto [par, v] = detail::nelder_mead(neg, {bx_s, ba_s}, 0.3, 400);
        est.sigma_sup = std::max(est.sigma_sup, -v);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Closed-form constant pipeline.
// ---------------------------------------------------------------------------

inline double xi_constant(int p, double kappa) {
    if (p < 2) throw InvalidInput("xi_constant: p >= 2");
    if (kappa <= 0.0) throw InvalidInput("xi_constant: kappa > 0 required");
    if (p == 2) return 1.0;
    return double(p - 1) *
           std::pow(6.0 * double(p - 1) * double(p - 2) / kappa, 0.5 * double(p - 2));
}

inline double lambda_constant(int p, double kappa, double m_sigma) {
    if (kappa <= 0.0) throw InvalidInput("lambda_constant: kappa > 0 required");
    const double base = std::pow(12.0 * double(p - 1) / kappa, double(p - 1)) *
                        (1.0 + std::pow(double(p - 1) * m_sigma, double(p)));
    return std::pow(base + xi_constant(p, kappa), 1.0 / double(p));
}

inline double eta_constant(int p, double kappa, double m_sigma, double gamma) {
    const double lam = lambda_constant(p, kappa, m_sigma);
    return std::pow(2.0, 1.0 / double(p)) * lam * gamma *
           std::pow(8.0 / (double(p) * kappa), 1.0 / double(p));
}

inline double eta4_second_constant(double kappa4, double m_sigma, double gamma) {
    const double lam = lambda_constant(4, kappa4, m_sigma);
    return std::pow(2.0, 0.25) * lam * gamma * std::pow(2.0 / kappa4, 0.25);
}

struct OmegaResult {
    double omega = 0.0;
    int argmin_p = 0;
    std::map<int, double> terms;
};

// omega = min_p [ kappa_p/2 - 2^{(p-1)/p} gamma - (p-1) 2^{(p-1)/p} M_sigma gamma
//                 - ((p-1)/2) 2^{2(p-1)/p} gamma^2 ]
inline OmegaResult compute_omega(const std::map<int, double>& kappa, double gamma,
                                 double m_sigma) {
    if (kappa.empty()) throw InvalidInput("compute_omega: empty kappa profile");
    OmegaResult res;
    res.omega = std::numeric_limits<double>::infinity();
    for (const auto& [p, kp] : kappa) {
        const double e = double(p - 1) / double(p);
        const double t = kp / 2.0 - std::pow(2.0, e) * gamma -
                         double(p - 1) * std::pow(2.0, e) * m_sigma * gamma -
                         0.5 * double(p - 1) * std::pow(2.0, 2.0 * e) * gamma * gamma;
        res.terms[p] = t;
        if (t < res.omega) {
            res.omega = t;
            res.argmin_p = p;
        }
    }
    return res;
}

struct StabilityConstants {
    double lambda4 = 0.0, xi4 = 0.0, eta4 = 0.0;
    double lambda8 = 0.0, xi8 = 0.0, eta8 = 0.0;
    double eta4_second = 0.0;
    double omega_hat = 0.0; // min(kappa4, kappa8) / 8
};

inline StabilityConstants compute_stability_constants(double kappa4, double kappa8,
                                                      double m_sigma, double gamma) {
    StabilityConstants sc;
    sc.xi4 = xi_constant(4, kappa4);
    sc.lambda4 = lambda_constant(4, kappa4, m_sigma);
    sc.eta4 = eta_constant(4, kappa4, m_sigma, gamma);
    sc.xi8 = xi_constant(8, kappa8);
    sc.lambda8 = lambda_constant(8, kappa8, m_sigma);
    sc.eta8 = eta_constant(8, kappa8, m_sigma, gamma);
    sc.eta4_second = eta4_second_constant(kappa4, m_sigma, gamma);
    sc.omega_hat = std::min(kappa4, kappa8) / 8.0;
    return sc;
}

// ---------------------------------------------------------------------------
// Full assumption audit.
// ---------------------------------------------------------------------------

struct AssumptionFlag {
    std::string name;
    bool pass = false;
    bool required = false;
    std::string note;
};

struct AssumptionReport {
    std::string model_id;
    bool certified = true;

    std::map<int, KappaEstimate> kappa;
    SensitivityEstimates sens;
    std::optional<double> gamma_declared, m_sigma_declared;

    OmegaResult omega;
    StabilityConstants stability;

    std::vector<AssumptionFlag> flags;
    bool hard_pass = false;

    // search metadata
    double box_lo = 0.0, box_hi = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<int> pset;

    std::string summary_text() const {
        std::ostringstream os;
        os.precision(12);
        os << "assumption audit: " << model_id
           << (certified ? "" : "  [UNCERTIFIED MODEL: sampled constants only]") << "\n";
        os << "  dissipativity kappa_p (sampled";
        if (!kappa.empty() && kappa.begin()->second.declared) os << " | declared";
        os << "):\n";
        for (const auto& [p, est] : kappa) {
            os << "    p=" << p << ": " << est.value;
            if (est.declared) os << " | " << *est.declared;
            os << "  (family " << est.family << ")\n";
        }
        os << "  gamma_hat=" << sens.gamma_hat;
        if (gamma_declared) os << " (declared " << *gamma_declared << ")";
        os << "  M_sigma=" << sens.m_sigma_hat;
        if (m_sigma_declared) os << " (declared " << *m_sigma_declared << ")";
        os << "  M2=" << sens.m2_hat << "  sup|sigma|=" << sens.sigma_sup << "\n";
        os << "  omega=" << omega.omega << " (argmin p=" << omega.argmin_p << ")"
           << "  omega_hat=" << stability.omega_hat << "\n";
        os << "  Lambda4=" << stability.lambda4 << " Xi4=" << stability.xi4
           << " eta4=" << stability.eta4 << "\n";
        os << "  Lambda8=" << stability.lambda8 << " Xi8=" << stability.xi8
           << " eta8=" << stability.eta8 << "\n";
        os << "  eta4_second=" << stability.eta4_second << "\n";
        os << "  flags:\n";
        for (const auto& f : flags)
            os << "    [" << (f.pass ? "pass" : "FAIL") << (f.required ? "" : ", info")
               << "] " << f.name << (f.note.empty() ? "" : ": " + f.note) << "\n";
        os << "  verdict: " << (hard_pass ? "PASS" : "FAIL") << "\n";
        return os.str();
    }
};

struct AssumptionOptions {
    std::vector<int> pset = {2, 4, 6, 8, 10, 12, 14};
    KappaOptions search;
    double declared_tol = 1e-6;
};

inline AssumptionReport check_assumptions(const CoefficientModel& model,
                                          const AssumptionOptions& opt = {}) {
    AssumptionReport rep;
    rep.model_id = model.id();
    rep.certified = model.certified();
    rep.pset = opt.pset;
    rep.box_lo = opt.search.box_lo;
    rep.box_hi = opt.search.box_hi;
    rep.n_samples = opt.search.n_samples;
    rep.seed = opt.search.seed;

    rep.kappa = kappa_profile(model, opt.pset, opt.search);
    rep.sens = estimate_sensitivities(model, opt.search);
    rep.gamma_declared = model.declared_gamma();
    rep.m_sigma_declared = model.declared_m_sigma();

    // prefer declared constants in the derived pipeline when they agree with
    // the sampled values; otherwise fall back to the sampled estimates
    auto effective = [&](std::optional<double> declared, double sampled) {
        if (declared && std::abs(*declared - sampled) <= opt.declared_tol *
                                                            std::max(1.0, std::abs(*declared)))
            return *declared;
        return sampled;
    };
    std::map<int, double> kap_eff;
    bool declared_consistent = true;
    for (const auto& [p, est] : rep.kappa) {
        kap_eff[p] = effective(est.declared, est.value);
        if (est.declared &&
            std::abs(*est.declared - est.value) >
                opt.declared_tol * std::max(1.0, std::abs(*est.declared)))
            declared_consistent = false;
    }
    const double gamma_eff = effective(rep.gamma_declared, rep.sens.gamma_hat);
    const double msig_eff = effective(rep.m_sigma_declared, rep.sens.m_sigma_hat);
    if (rep.gamma_declared &&
        std::abs(*rep.gamma_declared - rep.sens.gamma_hat) >
            opt.declared_tol * std::max(1.0, std::abs(*rep.gamma_declared)))
        declared_consistent = false;
    if (rep.m_sigma_declared &&
        std::abs(*rep.m_sigma_declared - rep.sens.m_sigma_hat) >
            opt.declared_tol * std::max(1.0, std::abs(*rep.m_sigma_declared)))
        declared_consistent = false;

    bool kappa_pos = true;
    for (const auto& [p, k] : kap_eff) kappa_pos = kappa_pos && (k > 0.0);

    auto flag = [&](const std::string& name, bool pass, bool required,
                    const std::string& note = "") {
        rep.flags.push_back({name, pass, required, note});
    };

    flag("kappa_positive", kappa_pos, true,
         kappa_pos ? "" : "dissipativity fails somewhere in the search box");
    if (kappa_pos) {
        rep.omega = compute_omega(kap_eff, gamma_eff, msig_eff);
        double k4 = kap_eff.count(4) ? kap_eff.at(4) : kap_eff.begin()->second;
        double k8 = kap_eff.count(8) ? kap_eff.at(8) : k4;
        rep.stability = compute_stability_constants(k4, k8, msig_eff, gamma_eff);
        flag("omega_positive", rep.omega.omega > 0.0, true,
             "argmin p=" + std::to_string(rep.omega.argmin_p));
        flag("eta4_lt_1", rep.stability.eta4 < 1.0, true);
        flag("eta8_lt_1", rep.stability.eta8 < 1.0, true);
        flag("eta4_second_lt_1", rep.stability.eta4_second < 1.0, true);
    } else {
        flag("omega_positive", false, true, "skipped: kappa not positive");
        flag("eta4_lt_1", false, true, "skipped: kappa not positive");
        flag("eta8_lt_1", false, true, "skipped: kappa not positive");
        flag("eta4_second_lt_1", false, true, "skipped: kappa not positive");
    }
    flag("gamma_le_1", gamma_eff <= 1.0, true);
    flag("sigma_bounded", model.sigma_bounded(), true,
         "sampled sup " + std::to_string(rep.sens.sigma_sup));
    flag("drift_bounded", model.drift_bounded(), false,
         "drift grows linearly at infinity; the quantitative results rely on "
         "dissipativity rather than boundedness, so this is informational");
    flag("second_order_bounded", std::isfinite(rep.sens.m2_hat), false,
         "sampled sup over the search box only");
    flag("declared_vs_sampled", declared_consistent, true,
         declared_consistent ? "" : "a declared constant disagrees with its sampled estimate");
    flag("higher_order_derivatives", true, false,
         "orders 3..7 are assumed smooth; not audited numerically");
    if (!rep.certified)
        flag("model_certified", false, false,
             "user-supplied coefficients; constants above are sampled estimates, "
             "not certified bounds");

    rep.hard_pass = true;
    for (const auto& f : rep.flags)
        if (f.required && !f.pass) rep.hard_pass = false;
    return rep;
}

} // namespace mvfluct
