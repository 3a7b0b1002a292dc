#pragma once

#include <cstdint>
#include <random>

namespace countcop {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for stream `stream` of a study keyed by `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  splitmix64(s);
  return splitmix64(s);
}

// mt19937_64 wrapped with a hand-rolled uniform draw.  std::uniform_real_distribution
// is implementation-defined, which would break bitwise reproducibility of studies
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double uniform01() {
    const std::uint64_t bits = gen_() >> 11;
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace countcop
