#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hams {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that identical seeds produce identical streams on every platform
// (std::*_distribution algorithms are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed ^ 0x6d65726c696eULL)) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(gen_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream keyed off the original seed, e.g. one per view.
    Rng fork(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51a5ULL))); }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hams
