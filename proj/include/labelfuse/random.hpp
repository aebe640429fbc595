#pragma once

#include <cstdint>
#include <random>

namespace labelfuse {

/// Seeded generator with platform-independent derived draws.
///
/// The raw engine is std::mt19937_64, whose output sequence the standard
/// fixes. The std distributions are implementation-defined, so uniform,
/// integer and normal draws are derived here by hand:
///   uniform()  = (next() >> 11) * 2^-53
///   below(n)   = next() % n
///   normal()   = Box-Muller on two uniforms, no caching
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double sigma = 1.0);

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

}  // namespace labelfuse
