#pragma once

#include <cstdint>
#include <random>

namespace cfdr {

// Every stochastic routine takes a seed or an Rng&; nothing reads global state.
// Reproducibility is guaranteed within one build of the library.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(eng_);
    }
    double normal(double mean, double sd) {
        std::normal_distribution<double> d(mean, sd);
        return d(eng_);
    }
    // p is clamped to [0,1]; draws via inverse CDF so one engine call per draw.
    double bernoulli(double p) { return uniform(0.0, 1.0) < p ? 1.0 : 0.0; }

    uint64_t raw() { return eng_(); }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

// SplitMix64 step; used to derive independent seeds for the stages of a run
// (data, split, weights, training noise) from one base seed.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace cfdr
