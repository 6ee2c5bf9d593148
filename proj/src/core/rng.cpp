#include "core/rng.hpp"

namespace dapt {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97f4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b) {
  uint64_t state = base;
  uint64_t h = splitmix64(state);
  state ^= a;
  h ^= splitmix64(state);
  state ^= b;
  h ^= splitmix64(state);
  return h;
}

float truncated_normal(Rng& rng, float std_dev) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(std_dev));
  const double clip = 2.0 * static_cast<double>(std_dev);
  for (;;) {
    double v = dist(rng);
    if (v >= -clip && v <= clip) return static_cast<float>(v);
  }
}

int64_t uniform_index(Rng& rng, int64_t n) {
  std::uniform_int_distribution<int64_t> dist(0, n - 1);
  return dist(rng);
}

double uniform_real(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace dapt
