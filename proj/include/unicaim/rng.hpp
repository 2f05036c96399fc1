// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <random>

namespace unicaim {

/// Seeded random source for one simulation trial. Every stochastic piece of
/// the simulator draws from a Rng that the trial owns; nothing reaches for
/// global state, so trials are reproducible and safe to run concurrently.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Standard normal draw. Always consumes the same amount of stream state
    /// regardless of how the result is scaled, so trials that share a seed
    /// see identical underlying noise across sigma settings.
    double normal() { return normal_(engine_); }

    double uniform() { return uniform_(engine_); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Derive an independent child stream (per row, per trial, ...).
    Rng split(std::uint64_t salt) {
        std::uint64_t s = engine_();
        return Rng(s ^ (salt * 0x9e3779b97f4a7c15ULL));
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace unicaim
