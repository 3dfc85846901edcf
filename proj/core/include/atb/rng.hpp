#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace atb {

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Deterministic splitmix64 stream. All randomness in the project flows through
// this generator so results do not depend on the standard library's
// distribution implementations. Child streams are derived by hashing the
// construction seed with a label, so splitting never advances the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n), rejection-sampled so every value is equally likely.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; draws two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Normal(0, std) truncated to +/- 2 std by rejection.
  double trunc_normal(double std_dev) {
    double z;
    do {
      z = normal();
    } while (z < -2.0 || z > 2.0);
    return z * std_dev;
  }

  Rng split(std::string_view label) const {
    std::uint64_t h = fnv1a64(&seed_, sizeof(seed_));
    return Rng(fnv1a64(label, h));
  }

  Rng split(std::uint64_t index) const {
    std::uint64_t h = fnv1a64(&seed_, sizeof(seed_));
    return Rng(fnv1a64(&index, sizeof(index), h));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace atb
