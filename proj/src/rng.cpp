#include "relabund/rng.hpp"

#include <cmath>

namespace relabund {

uint64_t Rng::below(uint64_t n) {
  // Rejection to avoid modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded so consumption is fixed at
  // two uniforms per call.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
}

double Rng::lognormal(double mu, double sigma) {
  return std::exp(mu + sigma * normal());
}

long long Rng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  return mean < 10.0 ? poisson_small(mean) : poisson_ptrs(mean);
}

long long Rng::poisson_small(double mean) {
  const double limit = std::exp(-mean);
  long long k = 0;
  double prod = uniform();
  while (prod > limit) {
    ++k;
    prod *= uniform();
  }
  return k;
}

long long Rng::poisson_ptrs(double mean) {
  // Hormann's PTRS transformed-rejection sampler.
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<long long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * loglam - mean - std::lgamma(kf + 1.0))
      return static_cast<long long>(kf);
  }
}

uint64_t derive_seed(uint64_t base, uint64_t index) {
  // splitmix64 advanced by the replicate index.
  uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace relabund
