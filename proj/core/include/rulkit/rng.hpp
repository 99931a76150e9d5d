#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace rulkit {

// splitmix64 step; used to expand seeds and derive independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with Box-Muller normals. Bit-reproducible across platforms,
// unlike the std:: distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
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

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform index in [0, n). n must be > 0.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable child seed for (seed, stream_id); folds and label models get their
// own streams so parallel and serial execution see identical numbers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= 0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + stream_id);
}

inline Rng derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(derive_seed(seed, stream_id));
}

}  // namespace rulkit
