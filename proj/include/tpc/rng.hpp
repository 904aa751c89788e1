#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tpc {

// Deterministic random stream. std::mt19937_64 is fully specified by the
// standard; the uniform/normal mappings below are our own so that identical
// seeds give bit-identical draws on every platform (std::*_distribution is
// implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Box-Muller, one value per pair of uniforms (no cached second sample).
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  std::vector<double> normal_vec(int n) {
    std::vector<double> out(static_cast<size_t>(n));
    for (double& v : out) v = normal();
    return out;
  }

  std::vector<double> uniform_vec(int n, double lo, double hi) {
    std::vector<double> out(static_cast<size_t>(n));
    for (double& v : out) v = uniform(lo, hi);
    return out;
  }

  // Independent substream: mixes the parent stream with a caller-chosen id so
  // config changes in one consumer do not shift another consumer's draws.
  Rng fork(uint64_t stream_id) {
    uint64_t s = next_u64();
    s ^= stream_id * 0x9e3779b97f4a7c15ull;
    s ^= (s >> 30);
    s *= 0xbf58476d1ce4e5b9ull;
    s ^= (s >> 27);
    return Rng(s);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tpc
