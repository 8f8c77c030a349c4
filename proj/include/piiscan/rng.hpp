#pragma once

// Deterministic RNG used everywhere randomness is needed.  A fixed in-house
// generator (splitmix64) rather than std::mt19937 + distributions: the standard
// distributions are implementation-defined, and reproducibility of generated
// datasets, folds and benchmarks across builds matters more than statistical
// sophistication here.

#include <cstdint>
#include <vector>

namespace piiscan {

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n).  Modulo bias is irrelevant at the bounds used here.
    uint64_t bounded(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Uniform in [lo, hi] inclusive.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(bounded(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Uniform double in [0, 1).
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return unit() < p; }

    // Derive an independent stream; stable under changes to how much the
    // parent stream is consumed afterwards.
    Rng fork(uint64_t salt) const {
        Rng r(state_ ^ (0xd6e8feb86659fd93ull * (salt + 1)));
        r.next_u64();
        return r;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<size_t>(bounded(v.size()))];
    }

private:
    uint64_t state_;
};

}  // namespace piiscan
