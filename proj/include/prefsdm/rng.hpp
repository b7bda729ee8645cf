#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace prefsdm {

/// Deterministic random stream. All samplers consume the underlying
/// mt19937_64 through a fixed set of hand-rolled transforms, so a given
/// (seed, call sequence) reproduces bit-identical draws on any platform.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix(seed)), seed_(seed) {}

  /// Independent substream keyed by tag; used for chain seeds, replicate
  /// seeds and to decouple e.g. point-pattern draws from response draws.
  Rng fork(std::uint64_t tag) const {
    std::uint64_t mixed = seed_ ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    mixed = (mixed ^ (mixed >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return Rng(mixed ^ (mixed >> 31));
  }

  /// Uniform on [0, 1).
  double uniform() {
    // 53-bit mantissa from the top bits of one 64-bit word
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1); never returns 0 (safe inside log()).
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Exponential with rate `lambda`.
  double exponential(double lambda) { return -std::log(uniform_pos()) / lambda; }

  /// Gamma(shape, scale) via Marsaglia-Tsang; shape < 1 boosted.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * scale;
    }
  }

  /// Inverse-gamma(shape, rate): 1/X with X ~ Gamma(shape, 1/rate).
  double inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, 1.0 / rate); }

  /// Poisson with the given mean. Exact for any finite mean: large means
  /// are split recursively (sum of independent halves), small means use
  /// the product-of-uniforms method.
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    long total = 0;
    while (mean > 30.0) {
      total += poisson(mean * 0.5);
      mean *= 0.5;
    }
    const double limit = std::exp(-mean);
    double prod = uniform();
    long k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return total + k;
  }

  long bernoulli(double p) { return uniform() < p ? 1 : 0; }

  /// Draw from N(mean, sd^2) truncated to [lo, +inf). Exact rejection:
  /// plain resampling when the standardized bound is mild, the translated
  /// exponential envelope otherwise. Stable far into the tail
  /// (standardized bounds beyond 8 are routine).
  double truncated_normal_lower(double mean, double sd, double lo) {
    const double a = (lo - mean) / sd;
    if (a < 0.3) {
      for (;;) {
        const double z = normal();
        if (z >= a) return mean + sd * z;
      }
    }
    const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      const double x = a + exponential(alpha);
      const double d = x - alpha;
      if (std::log(uniform_pos()) <= -0.5 * d * d) return mean + sd * x;
    }
  }

  /// Draw from N(mean, sd^2) truncated to (-inf, hi].
  double truncated_normal_upper(double mean, double sd, double hi) {
    return -truncated_normal_lower(-mean, sd, -hi);
  }

  std::uint64_t raw() { return engine_(); }

private:
  static std::mt19937_64 splitmix(std::uint64_t seed) {
    // splitmix64 whitening so that adjacent seeds give unrelated streams
    auto next = [&]() {
      seed += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
    };
    std::seed_seq seq{static_cast<std::uint32_t>(next()), static_cast<std::uint32_t>(next() >> 32),
                      static_cast<std::uint32_t>(next()), static_cast<std::uint32_t>(next() >> 32)};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace prefsdm
