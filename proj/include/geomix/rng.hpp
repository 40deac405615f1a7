#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace geomix {

/// splitmix64 step; also used to mix seeds for sub-streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic combination of a base seed with a stream tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x2545f4914f6cdd1dULL * (tag + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

/// Sequential random stream owned by a single chain or worker.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }
  double normal() { return norm_(gen_); }

  /// Gamma(shape, scale); mean = shape*scale.
  double gamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(gen_);
  }

  /// Inverse-gamma with given shape and rate.
  double inv_gamma(double shape, double rate) {
    return 1.0 / gamma(shape, 1.0 / rate);
  }

  Eigen::VectorXd normals(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Derive an independent seed for a sub-stream (advances this stream).
  std::uint64_t derive() {
    return (static_cast<std::uint64_t>(gen_()) << 1) ^ gen_();
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> norm_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

// Counter-based draws keyed by (stream, draw, item). Used for prediction
// noise so that chunked evaluation is independent of the chunk layout.
namespace keyed {

inline std::uint64_t hash3(std::uint64_t key, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = key;
  s ^= splitmix64(s) + a;
  s ^= splitmix64(s) + (b << 32 | (b >> 32));
  return splitmix64(s);
}

/// U(0,1], exactly reproducible for a given (key, draw, item).
inline double uniform(std::uint64_t key, std::uint64_t draw, std::uint64_t item) {
  std::uint64_t x = hash3(key, draw, item);
  return static_cast<double>((x >> 11) | 1ULL) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two keyed uniforms.
inline double normal(std::uint64_t key, std::uint64_t draw, std::uint64_t item) {
  std::uint64_t s = hash3(key, draw, item);
  std::uint64_t x1 = splitmix64(s);
  std::uint64_t x2 = splitmix64(s);
  double u1 = static_cast<double>((x1 >> 11) | 1ULL) * 0x1.0p-53;
  double u2 = static_cast<double>(x2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace keyed

}  // namespace geomix
