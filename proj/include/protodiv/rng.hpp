// =============================================================
// rng.hpp -- deterministic random number generation
// =============================================================
//
// All randomness in the library flows through this one class so that a
// run is reproducible bit-for-bit from a single master seed.  The
// distribution transforms are written out explicitly (instead of using
// std::uniform_real_distribution and friends) because the standard
// distributions are not required to produce identical streams across
// implementations; the raw mt19937_64 engine IS pinned by the standard.
//
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "errors.hpp"

namespace protodiv {

// SplitMix64 step.  Used for deriving independent sub-seeds (per epoch,
// per segment, per retry) from a master seed without correlated streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sub-seed for stream `index` of master `seed`: splitmix64 applied to
// seed XOR index.  Deterministic, order-independent, collision-free for
// the index ranges used here.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1).  53-bit mantissa construction.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("Rng::uniform: empty interval");
    return lo + (hi - lo) * uniform();
  }

  // Standard normal via Box-Muller.  Generates pairs; caches the second.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // avoid log(0)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Integer in [0, n).  Rejection-free modulo bias is acceptable here: n
  // is always tiny (< 2^20) next to the 64-bit range.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ValidationError("Rng::below: n must be positive");
    return engine_() % n;
  }

  // Fisher-Yates shuffle of an index vector.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace protodiv
