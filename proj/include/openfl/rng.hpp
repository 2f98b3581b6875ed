#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace openfl {

// splitmix64 finalizer; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a path of
// indices (stream tag, client id, sample index, ...). Every concurrent
// consumer owns its own stream, so results do not depend on thread count
// or scheduling order.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t v : path) h = mix64(h ^ mix64(v));
  return h;
}

// xoshiro256++ with splitmix64 seeding and Box-Muller normals.
class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = mix64(s++);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    std::uint64_t x = next_u64();
    std::uint64_t r = x % n;
    while (x - r > std::uint64_t(0) - n) {
      x = next_u64();
      r = x % n;
    }
    return r;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential(1), used for nonnegative i.i.d. averaging weights.
  double exponential() { return -std::log(1.0 - uniform01()); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream tags for derive_seed paths. Keeping them in one place avoids
// accidental stream collisions between subsystems.
namespace stream {
constexpr std::uint64_t data = 0x01;
constexpr std::uint64_t data_means = 0x09;
constexpr std::uint64_t client = 0x02;
constexpr std::uint64_t churn = 0x03;
constexpr std::uint64_t select = 0x04;
constexpr std::uint64_t sweep = 0x05;
constexpr std::uint64_t stability = 0x06;
constexpr std::uint64_t lyapunov = 0x07;
constexpr std::uint64_t lyapunov_advance = 0x08;
}  // namespace stream

}  // namespace openfl
