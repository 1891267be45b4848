#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace mvfluct {

struct SeedLineage {
    std::uint64_t master = 0;
    std::uint64_t replicate = 0;
};

struct InitialLaw {
    double mean = 0.0;
    double var = 1.0;
};

struct ParticleEnsemble {
    double time = 0.0;
    std::vector<double> x;
    SeedLineage lineage;

    std::size_t size() const { return x.size(); }
    Cloud cloud() const { return Cloud(x); }
};

// One replicate path with the full grid and the Brownian increments that
// produced it; the derivative propagators replay exactly these increments.
// Storage is flat: state(n, i) with n = 0..steps, increment(n, i) with
// n = 0..steps-1.
struct PathRecord {
    double dt = 0.0;
    std::size_t N = 0;
    std::size_t steps = 0;
    std::vector<double> states;     // (steps+1) * N
    std::vector<double> increments; // steps * N
    SeedLineage lineage;

    double state(std::size_t n, std::size_t i) const { return states[n * N + i]; }
    const double* state_row(std::size_t n) const { return states.data() + n * N; }
    const double* increment_row(std::size_t n) const { return increments.data() + n * N; }
    double time_at(std::size_t n) const { return double(n) * dt; }
    Cloud cloud_at(std::size_t n) const { return Cloud(state_row(n), N); }

    template <class F>
    double observable(std::size_t n, F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += f(state(n, i));
        return s / double(N);
    }
};

namespace detail {
inline void check_finite(const double* x, std::size_t N, std::uint64_t rep,
                         std::size_t step) {
    for (std::size_t i = 0; i < N; ++i)
        if (!std::isfinite(x[i])) throw SimulationDiverged(rep, i, step);
}
} // namespace detail

// One Euler step of the interacting system; coefficients frozen at the
// pre-step cloud. x_out may alias x_in.
inline void step_system(const CoefficientModel& model, const double* x_in,
                        std::size_t N, double dt, const double* dB, double* x_out,
                        std::vector<double>& b_buf, std::vector<double>& s_buf) {
    b_buf.resize(N);
    s_buf.resize(N);
    model.drift_diffusion_all(x_in, N, b_buf.data(), s_buf.data());
    for (std::size_t i = 0; i < N; ++i)
        x_out[i] = x_in[i] + b_buf[i] * dt + s_buf[i] * dB[i];
}

inline void step_system(const CoefficientModel& model, ParticleEnsemble& ens,
                        double dt, const double* dB) {
    std::vector<double> b, s;
    step_system(model, ens.x.data(), ens.size(), dt, dB, ens.x.data(), b, s);
    detail::check_finite(ens.x.data(), ens.size(), ens.lineage.replicate, 0);
    ens.time += dt;
}

inline std::vector<double> sample_initial(std::size_t N, const InitialLaw& law,
                                          std::uint64_t master, std::uint64_t replicate) {
    NormalRng rng(master, replicate, STREAM_INITIAL);
    const double sd = std::sqrt(law.var);
    std::vector<double> x(N);
    for (std::size_t i = 0; i < N; ++i) x[i] = law.mean + sd * rng.normal();
    return x;
}

// Full-path simulation with increment retention.
inline PathRecord simulate_path(const CoefficientModel& model, std::size_t N,
                                std::size_t steps, double dt, std::uint64_t master,
                                std::uint64_t replicate,
                                const InitialLaw& init = {}) {
    if (model.dim_state() != 1 || model.dim_noise() != 1)
        throw UnsupportedCapability("simulate_path: engine handles d = m = 1");
    PathRecord rec;
    rec.dt = dt;
    rec.N = N;
    rec.steps = steps;
    rec.lineage = {master, replicate};
    rec.states.assign((steps + 1) * N, 0.0);
    rec.increments.assign(steps * N, 0.0);

    const std::vector<double> x0 = sample_initial(N, init, master, replicate);
    for (std::size_t i = 0; i < N; ++i) rec.states[i] = x0[i];

    NormalRng inc(master, replicate, STREAM_INCREMENTS);
    const double sdt = std::sqrt(dt);
    std::vector<double> b, s;
    for (std::size_t n = 0; n < steps; ++n) {
        double* dB = rec.increments.data() + n * N;
        for (std::size_t i = 0; i < N; ++i) dB[i] = sdt * inc.normal();
        const double* xin = rec.states.data() + n * N;
        double* xout = rec.states.data() + (n + 1) * N;
        step_system(model, xin, N, dt, dB, xout, b, s);
        detail::check_finite(xout, N, replicate, n + 1);
    }
    return rec;
}

inline std::vector<PathRecord> simulate_replicates(const CoefficientModel& model,
                                                   std::size_t N, std::size_t steps,
                                                   double dt, std::uint64_t master,
                                                   std::size_t R,
                                                   const InitialLaw& init = {},
                                                   unsigned workers = 0) {
    std::vector<PathRecord> out(R);
    parallel_for(R, [&](std::size_t r) {
        out[r] = simulate_path(model, N, steps, dt, master, r, init);
    }, workers);
    return out;
}

// Streaming variant: no path storage, only <mu_t^N, phi_k> at requested nodes.
// Output layout: values[r][node_idx * nphi + k].
// antithetic=true pairs replicates: 2k+1 reruns 2k's streams with every normal
// negated (initial draws and increments both). Consumers that report standard
// errors should then aggregate over pair means, not raw replicates.
inline std::vector<std::vector<double>> simulate_observables(
    const CoefficientModel& model, std::size_t N, std::size_t steps, double dt,
    std::uint64_t master, std::size_t R, const std::vector<std::size_t>& nodes,
    const std::vector<TestFunction>& phis, const InitialLaw& init = {},
    unsigned workers = 0, bool antithetic = false) {
    if (model.dim_state() != 1 || model.dim_noise() != 1)
        throw UnsupportedCapability("simulate_observables: engine handles d = m = 1");
    for (std::size_t nd : nodes)
        if (nd > steps) throw InvalidInput("simulate_observables: node beyond horizon");
    for (std::size_t k = 1; k < nodes.size(); ++k)
        if (nodes[k] < nodes[k - 1])
            throw InvalidInput("simulate_observables: nodes must be nondecreasing");
    if (antithetic && R % 2 != 0)
        throw InvalidInput("simulate_observables: antithetic needs an even replicate count");
    const std::size_t nphi = phis.size();
    std::vector<std::vector<double>> out(R, std::vector<double>(nodes.size() * nphi, 0.0));
    parallel_for(R, [&](std::size_t r) {
        const std::uint64_t id = antithetic ? r / 2 : r;
        const double sign = (antithetic && r % 2 == 1) ? -1.0 : 1.0;
        std::vector<double> x(N);
        {
            NormalRng ini(master, id, STREAM_INITIAL);
            const double sd = std::sqrt(init.var);
            for (std::size_t i = 0; i < N; ++i) x[i] = init.mean + sd * sign * ini.normal();
        }
        NormalRng inc(master, id, STREAM_INCREMENTS);
        const double sdt = sign * std::sqrt(dt);
        std::vector<double> dB(N), b, s;
        std::size_t next_node = 0;
        auto record = [&](std::size_t node_idx) {
            for (std::size_t k = 0; k < nphi; ++k) {
                double acc = 0.0;
                for (std::size_t i = 0; i < N; ++i) acc += phis[k](x[i]);
                out[r][node_idx * nphi + k] = acc / double(N);
            }
        };
        while (next_node < nodes.size() && nodes[next_node] == 0) record(next_node++);
        for (std::size_t n = 0; n < steps; ++n) {
            for (std::size_t i = 0; i < N; ++i) dB[i] = sdt * inc.normal();
            step_system(model, x.data(), N, dt, dB.data(), x.data(), b, s);
            detail::check_finite(x.data(), N, r, n + 1);
            while (next_node < nodes.size() && nodes[next_node] == n + 1)
                record(next_node++);
        }
    }, workers);
    return out;
}

// ---------------------------------------------------------------------------
// Limit law flow.
//
// Two backends:
//  * AnalyticGaussian, valid for MEAN_FIELD_OU only: the limit law stays
//    Gaussian, with continuous-time moments
//      m(t) = m0 exp(-(theta - gamma) t)
//      v(t) = v0 exp(-2 theta t) + Sigma^2 (1 - exp(-2 theta t)) / (2 theta)
//    plus the Euler-matched moment recursion on the same grid,
//      m_{n+1} = (1 - (theta - gamma) dt) m_n
//      v_{n+1} = (1 - theta dt)^2 v_n + Sigma^2 dt,
//    used when centering finite-dt simulations so that discretization bias
//    does not masquerade as a fluctuation.
//  * ReferenceCloud: one large auxiliary particle system (size N_ref) whose
//    empirical law stands in for the limit.
// ---------------------------------------------------------------------------

struct LawFlowOptions {
    enum Kind { Auto, AnalyticGaussian, ReferenceCloud } kind = Auto;
    std::size_t n_ref = 1u << 14;
    std::uint64_t seed = 777;
    std::size_t gh_points = 64;
};

class LawFlow {
public:
    enum Kind { AnalyticGaussian, ReferenceCloud } kind = AnalyticGaussian;
    double dt = 0.0;
    std::size_t steps = 0;

    // analytic backend
    double theta = 0.0, gamma = 0.0, Sigma = 0.0, m0 = 0.0, v0 = 1.0;
    GaussHermite gh;
    std::vector<double> m_disc, v_disc; // Euler-matched moments per node

    // cloud backend
    PathRecord ref;

    double mean_t(double t) const {
        if (kind != AnalyticGaussian)
            throw UnsupportedCapability("LawFlow: moments need the analytic backend");
        return m0 * std::exp(-(theta - gamma) * t);
    }
    double var_t(double t) const {
        if (kind != AnalyticGaussian)
            throw UnsupportedCapability("LawFlow: moments need the analytic backend");
        if (theta == 0.0) return v0 + Sigma * Sigma * t;
        const double e = std::exp(-2.0 * theta * t);
        return v0 * e + Sigma * Sigma * (1.0 - e) / (2.0 * theta);
    }

    std::size_t node_of(double t) const {
        const double n = t / dt;
        const auto r = std::size_t(std::llround(n));
        if (std::abs(n - double(r)) > 1e-9 || r > steps)
            throw InvalidInput("LawFlow: time off the simulation grid");
        return r;
    }

    // E_{mu_t} phi. discrete_matched selects the Euler-matched moments
    // (analytic backend); the cloud backend is discrete by construction.
    double mean_phi(const TestFunction& phi, double t, bool discrete_matched = true) const {
        if (kind == AnalyticGaussian) {
            const std::size_t n = node_of(t);
            const double m = discrete_matched ? m_disc[n] : mean_t(t);
            const double v = discrete_matched ? v_disc[n] : var_t(t);
            return gaussian_expectation(gh, m, v, [&](double x) { return phi(x); });
        }
        return ref.observable(node_of(t), [&](double x) { return phi(x); });
    }

    Cloud cloud_at(double t) const {
        if (kind != ReferenceCloud)
            throw UnsupportedCapability("LawFlow: cloud_at needs the cloud backend");
        return ref.cloud_at(node_of(t));
    }

    // mean and variance of the reference law at a node (cloud: sample moments)
    double moment_mean(double t) const {
        if (kind == AnalyticGaussian) return m_disc[node_of(t)];
        const std::size_t n = node_of(t);
        return ref.observable(n, [](double x) { return x; });
    }
    double moment_var(double t) const {
        if (kind == AnalyticGaussian) return v_disc[node_of(t)];
        const std::size_t n = node_of(t);
        const double m = moment_mean(t);
        return ref.observable(n, [m](double x) { return (x - m) * (x - m); });
    }
};

inline LawFlow law_flow(const CoefficientModel& model, std::size_t steps, double dt,
                        const InitialLaw& init = {}, LawFlowOptions opts = {}) {
    LawFlow lf;
    lf.dt = dt;
    lf.steps = steps;
    const auto* ou = dynamic_cast<const MeanFieldOU*>(&model);
    bool analytic = false;
    switch (opts.kind) {
        case LawFlowOptions::Auto: analytic = (ou != nullptr); break;
        case LawFlowOptions::AnalyticGaussian:
            if (!ou)
                throw UnsupportedCapability(
                    "law_flow: analytic backend exists only for MEAN_FIELD_OU");
            analytic = true;
            break;
        case LawFlowOptions::ReferenceCloud: analytic = false; break;
    }
    if (analytic) {
        lf.kind = LawFlow::AnalyticGaussian;
        lf.theta = ou->theta;
        lf.gamma = ou->gamma_int;
        lf.Sigma = ou->sigma_const;
        lf.m0 = init.mean;
        lf.v0 = init.var;
        lf.gh = gauss_hermite(opts.gh_points);
        lf.m_disc.assign(steps + 1, 0.0);
        lf.v_disc.assign(steps + 1, 0.0);
        lf.m_disc[0] = init.mean;
        lf.v_disc[0] = init.var;
        const double a = 1.0 - (lf.theta - lf.gamma) * dt;
        const double g = 1.0 - lf.theta * dt;
        for (std::size_t n = 0; n < steps; ++n) {
            lf.m_disc[n + 1] = a * lf.m_disc[n];
            lf.v_disc[n + 1] = g * g * lf.v_disc[n] + lf.Sigma * lf.Sigma * dt;
        }
    } else {
        lf.kind = LawFlow::ReferenceCloud;
        lf.ref = simulate_path(model, opts.n_ref, steps, dt, opts.seed, 0, init);
    }
    return lf;
}

// ---------------------------------------------------------------------------
// Fluctuation statistics at one time node.
//   value_r = <mu_t^{N,(r)}, phi>
//   G_r = sqrt(N) (value_r - <mu_t, phi>)        centered at the limit
//   F_r = sqrt(N) (value_r - mean_r value_r)     centered at the replicate mean
// ---------------------------------------------------------------------------

struct FluctuationSamples {
    std::vector<double> values;
    std::vector<double> G;
    std::vector<double> F;
    double reference = 0.0;
    std::size_t N = 0;
};

inline FluctuationSamples fluctuation_samples(const std::vector<double>& values,
                                              std::size_t N, double reference) {
    FluctuationSamples fs;
    fs.values = values;
    fs.N = N;
    fs.reference = reference;
    const double rtN = std::sqrt(double(N));
    const double mean = mean_of(values);
    fs.G.resize(values.size());
    fs.F.resize(values.size());
    for (std::size_t r = 0; r < values.size(); ++r) {
        fs.G[r] = rtN * (values[r] - reference);
        fs.F[r] = rtN * (values[r] - mean);
    }
    return fs;
}

inline FluctuationSamples fluctuation_samples(const std::vector<PathRecord>& paths,
                                              const LawFlow& lf, const TestFunction& phi,
                                              double t) {
    if (paths.empty()) throw InvalidInput("fluctuation_samples: no paths");
    const std::size_t node = lf.node_of(t);
    std::vector<double> values(paths.size());
    for (std::size_t r = 0; r < paths.size(); ++r)
        values[r] = paths[r].observable(node, [&](double x) { return phi(x); });
    return fluctuation_samples(values, paths[0].N, lf.mean_phi(phi, t));
}

} // namespace mvfluct
