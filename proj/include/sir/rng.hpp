#pragma once

#include <cmath>
#include <cstdint>

namespace sir {

/// splitmix64, used for seeding and for deriving per-replicate streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hash used to split a base seed into independent replicate streams:
/// stream(r) = base_seed ^ splitmix64(r+1).
inline std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t replicate) {
    std::uint64_t s = replicate + 1;
    return base_seed ^ splitmix64(s);
}

/// xoshiro256++ with all draw code owned by this project, so that runs are
/// bit-reproducible independently of the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        have_cached_gauss_ = false;
    }

    using result_type = std::uint64_t;
    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() { return ~0ULL; }

    std::uint64_t operator()() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on [0,1), strictly positive (for logs).
    double uniform_pos() {
        double u;
        do { u = uniform(); } while (u == 0.0);
        return u;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection to avoid modulo bias.
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v;
        do { v = (*this)(); } while (v >= limit);
        return v % n;
    }

    double exponential(double rate) { return -std::log(1.0 - uniform()) / rate; }

    /// Standard normal via Box-Muller (second draw cached).
    double gaussian() {
        if (have_cached_gauss_) {
            have_cached_gauss_ = false;
            return cached_gauss_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_gauss_ = r * std::sin(a);
        have_cached_gauss_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
    double cached_gauss_ = 0.0;
    bool have_cached_gauss_ = false;
};

}  // namespace sir
