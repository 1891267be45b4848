#pragma once

#include <cmath>
#include <cstdint>

namespace mvfluct {

// splitmix64, used for seeding and for hashing stream coordinates.
struct SplitMix64 {
    std::uint64_t s;
    std::uint64_t next() {
        std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

inline std::uint64_t hash_combine64(std::uint64_t a, std::uint64_t b) {
    SplitMix64 s{a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2))};
    return s.next();
}

// Stream coordinates: (master_seed, replicate, tag) pick out one statistically
// independent stream, regardless of how replicates are scheduled over threads.
enum StreamTag : std::uint64_t {
    STREAM_INCREMENTS = 0,
    STREAM_INITIAL = 1,
    STREAM_SEARCH = 2,
    STREAM_BOOTSTRAP = 3,
};

inline std::uint64_t stream_key(std::uint64_t master, std::uint64_t replicate,
                                std::uint64_t tag) {
    return hash_combine64(hash_combine64(master, replicate), tag);
}

// xoshiro256++ (Blackman/Vigna), seeded through splitmix64.
struct Xoshiro256pp {
    std::uint64_t s[4];

    explicit Xoshiro256pp(std::uint64_t seed = 1) {
        SplitMix64 sm{seed};
        for (auto& w : s) w = sm.next();
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform on (0,1), 53-bit mantissa
    double uniform() {
        for (;;) {
            const double u = double(next() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }
};

// Standard normals by the Marsaglia polar method: portable and
// bit-reproducible across platforms (std::normal_distribution is not).
struct NormalRng {
    Xoshiro256pp eng;
    bool have = false;
    double cached = 0.0;

    explicit NormalRng(std::uint64_t seed = 1) : eng(seed) {}
    NormalRng(std::uint64_t master, std::uint64_t replicate, std::uint64_t tag)
        : eng(stream_key(master, replicate, tag)) {}

    double normal() {
        if (have) {
            have = false;
            return cached;
        }
        double u, v, s;
        do {
            u = 2.0 * eng.uniform() - 1.0;
            v = 2.0 * eng.uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached = v * f;
        have = true;
        return u * f;
    }

    double uniform() { return eng.uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is < 2^-40 for any n used here; acceptable
        return eng.next() % n;
    }
};

} // namespace mvfluct
