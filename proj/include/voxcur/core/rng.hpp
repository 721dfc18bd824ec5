#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace voxcur {

/// Counter-style pseudo-random generator built on splitmix64.
///
/// Every consumer derives its own stream from a list of integer keys
/// (e.g. {seed, patient_index} or {seed, epoch, sample_index}), so
/// parallel and serial execution produce identical draws. No standard
/// distributions are used; all draws are fully specified here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    /// Derive an independent stream from a key tuple.
    static Rng from_keys(std::initializer_list<std::uint64_t> keys) {
        std::uint64_t h = 0x6a09e667f3bcc909ull;
        for (std::uint64_t k : keys) h = mix(h ^ mix(k));
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Lemire's multiply-shift; bias is negligible for n << 2^64 and the
        // mapping is deterministic, which is what matters here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (both uniforms always consumed).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::uint64_t state_;
};

}  // namespace voxcur
