#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace eqt {

/// Seeded random stream with self-contained distributions.
///
/// The standard library leaves normal_distribution's algorithm up to the
/// implementation, which would make dataset bytes depend on the toolchain.
/// Everything here is pinned: mt19937_64 plus explicit Box-Muller /
/// rejection transforms, so a seed fully determines every draw.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_mix_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one value cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// N(0,1) conditioned on [lo, hi], by rejection.
  double truncated_gaussian(double lo, double hi) {
    for (;;) {
      const double x = gaussian();
      if (x >= lo && x <= hi) return x;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// +1 or -1 with equal probability.
  int sign() { return bernoulli(0.5) ? +1 : -1; }

  std::uint64_t bits() { return eng_(); }

  /// Independent child stream for sample `index`; (seed, index) -> stream,
  /// so per-sample generation order never depends on batch layout.
  Rng substream(std::uint64_t index) const {
    std::uint64_t z = seed_mix_ + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

} // namespace eqt
