// Deterministic random number generation.
//
// std::mt19937/std::normal_distribution are not bit-portable across standard
// library implementations, so sampling is built on xoshiro256++ with an
// explicit Box-Muller transform: identical seeds give identical streams on
// every platform.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace lmbridge {

namespace detail {

// Finalizer of the splitmix64 generator; also used as a mixing function.
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    return splitmix64_mix(state);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Derives an independent stream seed from a master seed and an index path,
// e.g. derive_seed(master, {observation, sample}). Different paths give
// (with overwhelming probability) unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = detail::splitmix64_mix(master ^ 0x5851F42D4C957F2DULL);
    for (std::uint64_t p : path) {
        h ^= p + 0x9E3779B97F4A7C15ULL + (h << 12) + (h >> 4);
        h = detail::splitmix64_mix(h);
    }
    return h;
}

// xoshiro256++ (Blackman & Vigna). State seeded through splitmix64 so that
// any 64-bit seed, including 0, yields a valid nonzero state.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64_next(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform on the open interval (0, 1): 53-bit resolution, offset by half a
    // step so 0 and 1 are never returned (safe under log()).
    double uniform() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t state_[4];
};

// Standard normal sampler: Box-Muller on xoshiro256++ uniforms. The second
// variate of each pair is cached, so consecutive calls cost one pair per two.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed), has_spare_(false), spare_(0.0) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = rng_.uniform();
        const double u2 = rng_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

private:
    Xoshiro256pp rng_;
    bool has_spare_;
    double spare_;
};

}  // namespace lmbridge
