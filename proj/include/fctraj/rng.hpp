#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fctraj {

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view label) {
    return mix_seed(seed, fnv1a64(label));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index) {
    return splitmix64(mix_seed(seed, fnv1a64(label)) ^ splitmix64(index + 0x51ed2701ull));
}

// Seeded random source with portable draw semantics: every sample is derived
// from raw mt19937_64 output by fixed arithmetic, never through
// std::*_distribution (whose sequences are implementation-defined).
class rng64 {
public:
    explicit rng64(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Unbiased draw in [0, n) by rejection.
    uint64_t bounded(uint64_t n) {
        assert(n > 0);
        const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            uint64_t x = next_u64();
            if (x >= threshold) return x % n;
        }
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        assert(!v.empty());
        return v[static_cast<size_t>(bounded(v.size()))];
    }

    // First k elements of a uniform permutation, without replacement.
    template <typename T>
    std::vector<T> sample(const std::vector<T>& v, size_t k) {
        std::vector<T> copy = v;
        shuffle(copy);
        if (copy.size() > k) copy.resize(k);
        return copy;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fctraj
