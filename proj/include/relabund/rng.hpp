#pragma once

#include <cstdint>
#include <random>

namespace relabund {

// Deterministic draws layered over mt19937_64. The standard distributions are
// not bit-stable across library implementations, so every transform here is
// spelled out; a given seed yields the same stream on every platform.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Integer in [0, n).
  uint64_t below(uint64_t n);

  double normal();
  double lognormal(double mu, double sigma) ;

  // Poisson draw; product-of-uniforms for small means, transformed
  // rejection (PTRS) for large ones.
  long long poisson(double mean);

private:
  long long poisson_small(double mean);
  long long poisson_ptrs(double mean);

  std::mt19937_64 gen_;
};

// Per-replicate seed derivation: splitmix64 over the base seed and index,
// so replicate streams are independent of scheduling order.
uint64_t derive_seed(uint64_t base, uint64_t index);

}  // namespace relabund
