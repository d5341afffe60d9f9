#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "turbstoch/tensor.hpp"

namespace turbstoch {

// Deterministic normal generator (explicit Box-Muller over mt19937_64 so the
// stream does not depend on the standard library's distribution internals).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    double uniform01() {
        // 53-bit mantissa uniform in [0,1)
        return double(eng_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    void fill_normal(Tensor3& t) {
        for (double& v : t.data) v = normal();
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Pure function of (base seed, index): SplitMix64 finalizer over the pair.
// Used to derive independent per-realization streams.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace turbstoch
