#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "model.hpp"
#include "simulate.hpp"

namespace mvfluct {

// A differentiation direction: the Brownian increment of particle j at grid
// node `node`.
struct Direction {
    std::size_t node = 0;
    std::size_t j = 0;
};

// First-order tangents T_n[i] = d X_n^i / d(dB_{node}^j), one block per
// direction. Convention: T = 0 strictly before the node; at the node the
// block holds sigma(X_node^i) 1_{i=j} (the derivative the next state actually
// acquires), and the step node -> node+1 is the identity, because the one-step
// map is linear in its own increment. From node+1 on, the stored blocks are
// the exact pathwise derivatives of the discrete flow.
struct Tangents1 {
    std::vector<Direction> dirs;
    std::size_t N = 0;
    std::size_t steps = 0;
    bool history = false;
    std::vector<double> data; // history: dir x node x particle; else dir x particle

    const double* row(std::size_t dir, std::size_t n) const {
        return data.data() + (dir * (steps + 1) + n) * N;
    }
    double* row_mut(std::size_t dir, std::size_t n) {
        return data.data() + (dir * (steps + 1) + n) * N;
    }
    const double* final_row(std::size_t dir) const {
        return history ? row(dir, steps) : data.data() + dir * N;
    }
};

namespace detail {

struct StepBatches {
    FirstOrderBatch fo;
    SecondOrderBatch so;
    bool has_so = false;
};

inline void first_order_step(const FirstOrderBatch& B, double dt, const double* dB,
                             const double* T, double* Tn, std::size_t N,
                             std::vector<double>& mb, std::vector<double>& ms) {
    const bool use_kb = !B.k_b_zero;
    const bool use_ks = !B.k_sig_zero;
    if (use_kb) {
        mb.assign(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const double* kr = B.k_b.data() + i * N;
            double acc = 0.0;
            for (std::size_t l = 0; l < N; ++l) acc += kr[l] * T[l];
            mb[i] = acc / double(N);
        }
    }
    if (use_ks) {
        ms.assign(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const double* kr = B.k_sig.data() + i * N;
            double acc = 0.0;
            for (std::size_t l = 0; l < N; ++l) acc += kr[l] * T[l];
            ms[i] = acc / double(N);
        }
    }
    for (std::size_t i = 0; i < N; ++i) {
        double drift = B.dx_b[i] * T[i];
        if (use_kb) drift += mb[i];
        double diff = B.dx_sig_zero ? 0.0 : B.dx_sig[i] * T[i];
        if (use_ks) diff += ms[i];
        Tn[i] = T[i] + dt * drift + dB[i] * diff;
    }
}

} // namespace detail

inline Tangents1 propagate_first(const PathRecord& path, const CoefficientModel& model,
                                 const std::vector<Direction>& dirs, bool history) {
    const std::size_t N = path.N;
    const std::size_t S = path.steps;
    for (const auto& d : dirs) {
        if (d.node > S) throw InvalidInput("propagate_first: direction node beyond horizon");
        if (d.j >= N) throw InvalidInput("propagate_first: direction particle out of range");
    }
    Tangents1 tf;
    tf.dirs = dirs;
    tf.N = N;
    tf.steps = S;
    tf.history = history;
    tf.data.assign(history ? dirs.size() * (S + 1) * N : dirs.size() * N, 0.0);

    std::vector<double> cur(history ? 0 : dirs.size() * N, 0.0);
    auto cur_row = [&](std::size_t x) { return cur.data() + x * N; };

    FirstOrderBatch B;
    std::vector<double> mb, ms, bbuf, sbuf;
    for (std::size_t n = 0; n < S; ++n) {
        const double* X = path.state_row(n);
        bool need_batch = false;
        for (std::size_t x = 0; x < dirs.size(); ++x)
            if (dirs[x].node < n) { need_batch = true; break; }
        if (need_batch) model.first_order_batch(X, N, B);
        const double* dB = path.increment_row(n);
        for (std::size_t x = 0; x < dirs.size(); ++x) {
            const std::size_t ns = dirs[x].node;
            if (n < ns) continue;
            if (n == ns) {
                const double sig = model.diffusion(X[dirs[x].j], path.cloud_at(n));
                if (history) {
                    tf.row_mut(x, n)[dirs[x].j] = sig;
                    double* nxt = tf.row_mut(x, n + 1);
                    for (std::size_t i = 0; i < N; ++i) nxt[i] = tf.row(x, n)[i];
                } else {
                    cur_row(x)[dirs[x].j] = sig;
                }
                continue;
            }
            if (history) {
                detail::first_order_step(B, path.dt, dB, tf.row(x, n), tf.row_mut(x, n + 1),
                                         N, mb, ms);
            } else {
                detail::first_order_step(B, path.dt, dB, cur_row(x), cur_row(x), N, mb, ms);
            }
        }
    }
    // directions anchored at the final node still need their block seeded
    for (std::size_t x = 0; x < dirs.size(); ++x) {
        if (dirs[x].node == S) {
            const double sig =
                model.diffusion(path.state(S, dirs[x].j), path.cloud_at(S));
            if (history) tf.row_mut(x, S)[dirs[x].j] = sig;
            else cur_row(x)[dirs[x].j] = sig;
        }
    }
    if (!history) tf.data = std::move(cur);
    return tf;
}

// Second-order tangents W_n[i] = d^2 X_n^i / d(dB_r^k) d(dB_s^j), indexed by a
// pair of first-order directions (r <= s after canonicalization). Created at
// node s from the chain rule through sigma when r < s, identically zero at the
// creation node when r = s (the one-step map is linear in its own increment),
// then propagated by the exact derivative of the first-order recursion, which
// couples the pair through the second-order coefficient blocks.
struct TangentPair {
    std::size_t rdir = 0; // index into Tangents1::dirs
    std::size_t sdir = 0;
};

struct Tangents2 {
    std::vector<TangentPair> pairs;
    std::size_t N = 0;
    std::vector<double> final_vals; // pair x particle

    const double* final_row(std::size_t p) const { return final_vals.data() + p * N; }
};

// visitor(pair_index, node, W_row) runs after every node at which the pair's
// block exists (node >= s-node); pass nullptr when only finals are wanted.
using Tangent2Visitor = std::function<void(std::size_t, std::size_t, const double*)>;

inline Tangents2 propagate_second(const PathRecord& path, const CoefficientModel& model,
                                  const Tangents1& tf1, std::vector<TangentPair> pairs,
                                  const Tangent2Visitor& visitor = nullptr) {
    if (!tf1.history)
        throw InvalidInput("propagate_second: first-order history required");
    const std::size_t N = path.N;
    const std::size_t S = path.steps;

    // canonicalize: r-node <= s-node
    for (auto& pr : pairs) {
        if (tf1.dirs[pr.rdir].node > tf1.dirs[pr.sdir].node) std::swap(pr.rdir, pr.sdir);
    }

    Tangents2 tf2;
    tf2.pairs = pairs;
    tf2.N = N;
    tf2.final_vals.assign(pairs.size() * N, 0.0);

    std::vector<double> W(pairs.size() * N, 0.0);
    auto w_row = [&](std::size_t p) { return W.data() + p * N; };

    std::size_t min_node = S + 1;
    for (const auto& pr : pairs) min_node = std::min(min_node, tf1.dirs[pr.sdir].node);
    if (min_node > S) return tf2;

    FirstOrderBatch B1;
    SecondOrderBatch B2;
    // per-step caches of the one-sided kernel contractions, keyed by dir index
    std::vector<double> q_mudx(tf1.dirs.size() * N, 0.0);
    std::vector<double> q_dxmu(tf1.dirs.size() * N, 0.0);
    std::vector<char> have_mudx(tf1.dirs.size(), 0), have_dxmu(tf1.dirs.size(), 0);

    std::vector<double> gb(N), hs(N), vb(N), vs(N);

    for (std::size_t n = min_node; n < S; ++n) {
        const double* X = path.state_row(n);
        bool need_update = false, need_seed = false;
        for (const auto& pr : pairs) {
            const std::size_t ns = tf1.dirs[pr.sdir].node;
            if (ns < n) need_update = true;
            if (ns == n) need_seed = true;
            if (need_update && need_seed) break;
        }
        if (need_update) {
            model.first_order_batch(X, N, B1);
            model.second_order_batch(X, N, B2);
            std::fill(have_mudx.begin(), have_mudx.end(), 0);
            std::fill(have_dxmu.begin(), have_dxmu.end(), 0);
        }
        const double* dB = path.increment_row(n);
        const double dt = path.dt;

        FirstOrderBatch Bseed;
        if (need_seed) model.first_order_batch(X, N, Bseed);

        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const Direction& rd = tf1.dirs[pairs[p].rdir];
            const Direction& sd = tf1.dirs[pairs[p].sdir];
            const std::size_t ns = sd.node;
            if (n < ns) continue;
            double* Wp = w_row(p);
            if (n == ns) {
                // creation: differentiate the seed sigma(X_s^i) 1_{i=j}
                // along the r-direction; zero when both anchors coincide
                if (rd.node < ns) {
                    const double* U = tf1.row(pairs[p].rdir, n);
                    const std::size_t j = sd.j;
                    double val = Bseed.dx_sig_zero ? 0.0 : Bseed.dx_sig[j] * U[j];
                    if (!Bseed.k_sig_zero) {
                        const double* kr = Bseed.k_sig.data() + j * N;
                        double acc = 0.0;
                        for (std::size_t l = 0; l < N; ++l) acc += kr[l] * U[l];
                        val += acc / double(N);
                    }
                    Wp[j] = val;
                }
                if (visitor) { visitor(p, n, Wp); visitor(p, n + 1, Wp); }
                continue; // identity step to n+1
            }

            const double* U = tf1.row(pairs[p].rdir, n);
            const double* T = tf1.row(pairs[p].sdir, n);

            // homogeneous mean-field coupling through the first-order kernels
            const bool use_kb = !B1.k_b_zero;
            const bool use_ks = !B1.k_sig_zero;
            if (use_kb) {
                for (std::size_t i = 0; i < N; ++i) {
                    const double* kr = B1.k_b.data() + i * N;
                    double acc = 0.0;
                    for (std::size_t l = 0; l < N; ++l) acc += kr[l] * Wp[l];
                    gb[i] = acc / double(N);
                }
            }
            if (use_ks) {
                for (std::size_t i = 0; i < N; ++i) {
                    const double* kr = B1.k_sig.data() + i * N;
                    double acc = 0.0;
                    for (std::size_t l = 0; l < N; ++l) acc += kr[l] * Wp[l];
                    hs[i] = acc / double(N);
                }
            }

            // sources from the second-order blocks
            const bool src_b = !B2.b_blocks_zero;
            const bool src_s = !B2.sig_blocks_zero;
            const double* qmx = nullptr;
            const double* qdm = nullptr;
            if (src_b || src_s) {
                if (!have_mudx[pairs[p].rdir]) {
                    double* dst = q_mudx.data() + pairs[p].rdir * N;
                    if (src_b) {
                        for (std::size_t i = 0; i < N; ++i) {
                            const double* kr = B2.k_mudx_b.data() + i * N;
                            double acc = 0.0;
                            for (std::size_t l = 0; l < N; ++l) acc += kr[l] * U[l];
                            dst[i] = acc / double(N);
                        }
                    } else {
                        std::fill(dst, dst + N, 0.0);
                    }
                    have_mudx[pairs[p].rdir] = 1;
                }
                if (!have_dxmu[pairs[p].sdir]) {
                    double* dst = q_dxmu.data() + pairs[p].sdir * N;
                    if (src_b) {
                        for (std::size_t i = 0; i < N; ++i) {
                            const double* kr = B2.k_dxmu_b.data() + i * N;
                            double acc = 0.0;
                            for (std::size_t l = 0; l < N; ++l) acc += kr[l] * T[l];
                            dst[i] = acc / double(N);
                        }
                    } else {
                        std::fill(dst, dst + N, 0.0);
                    }
                    have_dxmu[pairs[p].sdir] = 1;
                }
                qmx = q_mudx.data() + pairs[p].rdir * N;
                qdm = q_dxmu.data() + pairs[p].sdir * N;
                if (src_b) {
                    for (std::size_t i = 0; i < N; ++i) {
                        const double* kr = B2.k_vmu_b.data() + i * N;
                        double acc = 0.0;
                        for (std::size_t l = 0; l < N; ++l) acc += kr[l] * U[l] * T[l];
                        vb[i] = acc / double(N);
                    }
                }
                if (src_s) {
                    for (std::size_t i = 0; i < N; ++i) {
                        const double* k1 = B2.k_mudx_sig.data() + i * N;
                        const double* k2 = B2.k_dxmu_sig.data() + i * N;
                        const double* k3 = B2.k_vmu_sig.data() + i * N;
                        double a1 = 0.0, a2 = 0.0, a3 = 0.0;
                        for (std::size_t l = 0; l < N; ++l) {
                            a1 += k1[l] * U[l];
                            a2 += k2[l] * T[l];
                            a3 += k3[l] * U[l] * T[l];
                        }
                        vs[i] = (T[i] * a1 + U[i] * a2 + a3) / double(N);
                    }
                }
                if (!B2.dmumu_zero) {
                    // doubly-measure block, O(N^2) per particle; none of the
                    // built-in models reaches this path
                    Cloud c(X, N);
                    for (std::size_t i = 0; i < N; ++i) {
                        double acc_b = 0.0, acc_s = 0.0;
                        for (std::size_t l = 0; l < N; ++l)
                            for (std::size_t q = 0; q < N; ++q) {
                                const SecondDerivs sd2 =
                                    model.second_derivatives(X[i], c, X[l], X[q]);
                                acc_b += sd2.dmumu_b * U[q] * T[l];
                                acc_s += sd2.dmumu_sig * U[q] * T[l];
                            }
                        vb[i] += acc_b / double(N * N);
                        vs[i] += acc_s / double(N * N);
                    }
                }
            }

            for (std::size_t i = 0; i < N; ++i) {
                double drift = B1.dx_b[i] * Wp[i];
                if (use_kb) drift += gb[i];
                if (src_b)
                    drift += B2.dxx_b[i] * U[i] * T[i] + T[i] * qmx[i] + U[i] * qdm[i] + vb[i];
                double diff = B1.dx_sig_zero ? 0.0 : B1.dx_sig[i] * Wp[i];
                if (use_ks) diff += hs[i];
                if (src_s) diff += B2.dxx_sig[i] * U[i] * T[i] + vs[i];
                Wp[i] += dt * drift + dB[i] * diff;
            }
            if (visitor) visitor(p, n + 1, Wp);
        }
    }

    // pairs whose s-node is the final node still get their creation value
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const Direction& rd = tf1.dirs[pairs[p].rdir];
        const Direction& sd = tf1.dirs[pairs[p].sdir];
        if (sd.node == S) {
            double* Wp = w_row(p);
            if (rd.node < S) {
                FirstOrderBatch Bs;
                model.first_order_batch(path.state_row(S), N, Bs);
                const double* U = tf1.row(pairs[p].rdir, S);
                const std::size_t j = sd.j;
                double val = Bs.dx_sig_zero ? 0.0 : Bs.dx_sig[j] * U[j];
                if (!Bs.k_sig_zero) {
                    const double* kr = Bs.k_sig.data() + j * N;
                    double acc = 0.0;
                    for (std::size_t l = 0; l < N; ++l) acc += kr[l] * U[l];
                    val += acc / double(N);
                }
                Wp[j] = val;
            }
            if (visitor) visitor(p, S, Wp);
        }
    }

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double* Wp = w_row(p);
        double* dst = tf2.final_vals.data() + p * N;
        for (std::size_t i = 0; i < N; ++i) dst[i] = Wp[i];
    }
    return tf2;
}

// ---------------------------------------------------------------------------
// Assembly of the Malliavin derivatives of F = sqrt(N)(<mu_t^N, phi> - c).
//   DF[x]     = N^{-1/2} sum_i phi'(X_t^i) T_x[i]
//   D2F[x][y] = N^{-1/2} sum_i (phi'(X_t^i) W_{xy}[i] + phi''(X_t^i) T_x[i] T_y[i])
// ---------------------------------------------------------------------------

struct MalliavinFrame {
    std::size_t K = 0;               // carrier size = #dirs
    std::vector<double> DF;          // K
    std::vector<double> D2F;         // K x K, symmetric
};

inline MalliavinFrame assemble_DF_D2F(const PathRecord& path, const TestFunction& phi,
                                      const Tangents1& tf1, const Tangents2& tf2) {
    const std::size_t N = path.N;
    const std::size_t K = tf1.dirs.size();
    if (tf2.pairs.size() != K * (K + 1) / 2)
        throw InvalidInput("assemble_DF_D2F: expected all canonical pairs");
    MalliavinFrame fr;
    fr.K = K;
    fr.DF.assign(K, 0.0);
    fr.D2F.assign(K * K, 0.0);
    const double rtN = std::sqrt(double(N));
    const double* X = path.state_row(path.steps);
    std::vector<double> dphi(N), d2phi(N);
    for (std::size_t i = 0; i < N; ++i) {
        dphi[i] = phi.df(X[i]);
        d2phi[i] = phi.d2f(X[i]);
    }
    for (std::size_t x = 0; x < K; ++x) {
        const double* T = tf1.final_row(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) acc += dphi[i] * T[i];
        fr.DF[x] = acc / rtN;
    }
    for (std::size_t p = 0; p < tf2.pairs.size(); ++p) {
        const std::size_t x = tf2.pairs[p].rdir;
        const std::size_t y = tf2.pairs[p].sdir;
        const double* W = tf2.final_row(p);
        const double* Tx = tf1.final_row(x);
        const double* Ty = tf1.final_row(y);
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            acc += dphi[i] * W[i] + d2phi[i] * Tx[i] * Ty[i];
        const double v = acc / rtN;
        fr.D2F[x * K + y] = v;
        fr.D2F[y * K + x] = v;
    }
    return fr;
}

inline std::vector<TangentPair> all_canonical_pairs(const std::vector<Direction>& dirs) {
    std::vector<TangentPair> pairs;
    pairs.reserve(dirs.size() * (dirs.size() + 1) / 2);
    for (std::size_t x = 0; x < dirs.size(); ++x)
        for (std::size_t y = x; y < dirs.size(); ++y) {
            TangentPair pr;
            if (dirs[x].node <= dirs[y].node) { pr.rdir = x; pr.sdir = y; }
            else { pr.rdir = y; pr.sdir = x; }
            pairs.push_back(pr);
        }
    return pairs;
}

// ---------------------------------------------------------------------------
// The contraction functional
//   Delta = sum_{x,y} w_x w_y sqrt(E[C(x,y)^2]) sqrt(E[DF_x^2 DF_y^2]),
//   C = D2F diag(w) D2F,
// estimated over replicates with delete-one jackknife for the estimator
// variance. Carrier weights w are the time-quadrature weights of each node
// (trapezoid on the retained s-grid), constant across the particle index.
// ---------------------------------------------------------------------------

struct DeltaResult {
    double delta = 0.0;
    double se = 0.0;
    std::size_t replicates = 0;
};

class DeltaEstimator {
public:
    DeltaEstimator(std::size_t K, std::vector<double> weights)
        : K_(K), w_(std::move(weights)) {
        if (w_.size() != K_) throw InvalidInput("DeltaEstimator: weight size mismatch");
        c2_sum_.assign(K_ * K_, 0.0);
        a2_sum_.assign(K_ * K_, 0.0);
    }

    void add_replicate(const MalliavinFrame& fr) {
        if (fr.K != K_) throw InvalidInput("DeltaEstimator: frame size mismatch");
        // C = D2 diag(w) D2 via the weighted intermediate M = diag(w) D2
        std::vector<double> M(K_ * K_);
        for (std::size_t z = 0; z < K_; ++z)
            for (std::size_t y = 0; y < K_; ++y) M[z * K_ + y] = w_[z] * fr.D2F[z * K_ + y];
        std::vector<double> C2(K_ * K_);
        for (std::size_t x = 0; x < K_; ++x) {
            for (std::size_t y = 0; y < K_; ++y) {
                const double* a = fr.D2F.data() + x * K_;
                double acc = 0.0;
                for (std::size_t z = 0; z < K_; ++z) acc += a[z] * M[z * K_ + y];
                C2[x * K_ + y] = acc * acc;
            }
        }
        std::vector<double> A(K_);
        for (std::size_t x = 0; x < K_; ++x) A[x] = fr.DF[x] * fr.DF[x];
        for (std::size_t x = 0; x < K_; ++x)
            for (std::size_t y = 0; y < K_; ++y) {
                c2_sum_[x * K_ + y] += C2[x * K_ + y];
                a2_sum_[x * K_ + y] += A[x] * A[y];
            }
        c2_reps_.push_back(std::move(C2));
        a_reps_.push_back(std::move(A));
    }

    DeltaResult finalize() const {
        const std::size_t R = c2_reps_.size();
        if (R == 0) throw InvalidInput("DeltaEstimator: no replicates");
        DeltaResult res;
        res.replicates = R;
        res.delta = contract(c2_sum_, a2_sum_, double(R));
        if (R >= 2) {
            std::vector<double> loo(R);
            std::vector<double> c2(K_ * K_), a2(K_ * K_);
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t x = 0; x < K_; ++x)
                    for (std::size_t y = 0; y < K_; ++y) {
                        const std::size_t idx = x * K_ + y;
                        c2[idx] = c2_sum_[idx] - c2_reps_[r][idx];
                        a2[idx] = a2_sum_[idx] - a_reps_[r][x] * a_reps_[r][y];
                    }
                loo[r] = contract(c2, a2, double(R - 1));
            }
            res.se = jackknife_se(loo);
        }
        return res;
    }

private:
    double contract(const std::vector<double>& c2, const std::vector<double>& a2,
                    double denom) const {
        double acc = 0.0;
        for (std::size_t x = 0; x < K_; ++x)
            for (std::size_t y = 0; y < K_; ++y) {
                const std::size_t idx = x * K_ + y;
                const double ec2 = std::max(c2[idx] / denom, 0.0);
                const double ea2 = std::max(a2[idx] / denom, 0.0);
                acc += w_[x] * w_[y] * std::sqrt(ec2) * std::sqrt(ea2);
            }
        return acc;
    }

    std::size_t K_;
    std::vector<double> w_;
    std::vector<double> c2_sum_, a2_sum_;
    std::vector<std::vector<double>> c2_reps_;
    std::vector<std::vector<double>> a_reps_;
};

// W1(F, Z_sigma) <= sqrt(8 / (pi sigma^2)) sqrt(Delta)
inline double vidotto_bound(double delta, double sigma2) {
    if (sigma2 <= 0.0) throw InvalidInput("vidotto_bound: sigma2 > 0 required");
    if (delta < 0.0) throw InvalidInput("vidotto_bound: delta >= 0 required");
    return std::sqrt(8.0 * delta / (M_PI * sigma2));
}

// ---------------------------------------------------------------------------
// Exponential-decay fits for tangent moment curves.
// ---------------------------------------------------------------------------

struct DecayFit {
    double rate = 0.0;      // slope of log(moment) against tau
    double intercept = 0.0;
    double se = 0.0;
    std::size_t n_points = 0;
};

inline DecayFit fit_decay(const std::vector<double>& tau, const std::vector<double>& moment,
                          double tau_lo, double tau_hi) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (tau[i] < tau_lo || tau[i] > tau_hi) continue;
        if (moment[i] <= 0.0)
            throw InvalidInput("fit_decay: non-positive moment inside the fit window");
        xs.push_back(tau[i]);
        ys.push_back(std::log(moment[i]));
    }
    if (xs.size() < 3) throw InvalidInput("fit_decay: fewer than 3 points in the window");
    const LinFit f = ols_fit(xs, ys);
    DecayFit df;
    df.rate = f.slope;
    df.intercept = f.intercept;
    df.se = f.slope_se;
    df.n_points = xs.size();
    return df;
}

// Carrier caps for the full-tensor functional; beyond them the quadratic and
// cubic costs take over and the coarse-carrier approximation must be explicit.
inline constexpr std::size_t kFullTensorMaxN = 16;
inline constexpr std::size_t kFullTensorMaxSteps = 64;

} // namespace mvfluct
