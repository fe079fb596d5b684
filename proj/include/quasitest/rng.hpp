#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace quasitest {

// Purposes used to carve independent streams out of a single user seed.
enum class StreamPurpose : std::uint64_t {
  Mcmc = 1,
  ImportanceSampling = 2,
  Perturbation = 3,
  Bootstrap = 4,
  Generator = 5,
  Censoring = 6,
  TestSeed = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream id for replicate `index` used for `purpose`.
inline std::uint64_t stream_id(std::uint64_t index, StreamPurpose purpose) {
  return splitmix64(index * 64 + static_cast<std::uint64_t>(purpose));
}

/// A reproducible random engine keyed by (seed, stream). Two engines with the
/// same key produce the same sequence; different streams are decorrelated by
/// hashing the key into the Mersenne Twister seed sequence.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    const std::uint64_t a = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    const std::uint64_t b = splitmix64(stream + 0x14057b7ef767814fULL);
    const std::uint64_t c = splitmix64(a ^ (b << 1));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    engine_.seed(seq);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); never returns 0, safe for logs and inverse CDFs.
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  double exponential() { return -std::log(uniform_open()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace quasitest
