#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pdmp {

/// A replica-local random stream. Streams for different replicas are derived from
/// (master seed, replica index) only, so results never depend on scheduling.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t index) : engine_(make_engine(seed, index)) {}
    explicit Stream(std::uint64_t seed) : Stream(seed, 0) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exp(1) by inversion.
    double exponential() { return -std::log1p(-uniform()); }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() { return normal_(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    static std::uint64_t splitmix64(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t index) {
        return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x70646d70ULL)));
    }

    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace pdmp
