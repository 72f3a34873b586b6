#pragma once

#include <cstdint>
#include <random>

namespace l2caf {

// Counter-split deterministic RNG. Every consumer derives its own stream from
// a root seed with split(); no global state. Double conversion is done by
// hand so streams are bit-stable across standard library implementations.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : seed_(seed), engine_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  /// Derive an independent child stream for (this seed, stream index).
  SplitRng split(std::uint64_t stream) const { return SplitRng(mix(seed_ + mix(stream + 0x632be59bd9b4e019ULL))); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace l2caf
