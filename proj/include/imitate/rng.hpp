#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace imitate {

/// Deterministic RNG. All randomness in the project flows through this type,
/// seeded from a single run seed; sub-streams are derived with fork() so that
/// per-component sequences stay stable regardless of evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(mix(seed)), seed_base_(mix(seed)) {}

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pinned implementation, no libc++ variance).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    int index(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    /// Derive an independent deterministic sub-stream.
    Rng fork(uint64_t stream) const {
        return Rng(seed_base_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    static uint64_t mix(uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_base_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace imitate
