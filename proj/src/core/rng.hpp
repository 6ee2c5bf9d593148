#pragma once

#include <cstdint>
#include <random>

namespace dapt {

using Rng = std::mt19937_64;

// splitmix64 step, used to derive independent stream seeds from a base seed.
uint64_t splitmix64(uint64_t& state);

// Deterministic seed derivation: mix_seed(base, a) and mix_seed(base, a, b)
// give well-separated streams for (epoch, purpose) style sub-streams.
uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b = 0);

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Normal(0, std_dev) truncated to [-2*std_dev, 2*std_dev] by rejection.
float truncated_normal(Rng& rng, float std_dev);

// Uniform integer in [0, n), n > 0.
int64_t uniform_index(Rng& rng, int64_t n);

// Uniform real in [0, 1).
double uniform_real(Rng& rng);

}  // namespace dapt
