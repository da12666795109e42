#pragma once

// Deterministic randomness shared by both logical parties and the Monte-Carlo
// harness. Every random decision in a run derives from one master seed through
// keyed splitmix64 steps, so serial and parallel executions see the same
// ensembles. The generator identity below is embedded in all output metadata.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace cascade {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kGeneratorId = "mt19937_64+splitmix64";

// splitmix64 step (Vigna's public-domain reference). From state 0 the first
// outputs are e220a8397b1dcdaf, 6e789e6aa1b965f4, 06c45d188009454f.
constexpr uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Keyed sub-seed derivation: one splitmix64 step over base xor'ed with a
// stream tag. Chain calls to build independent streams per (frame, purpose).
constexpr uint64_t derive_seed(uint64_t base, uint64_t stream) {
  uint64_t s = base ^ ((stream + 1) * 0x9e3779b97f4a7c15ull);
  return splitmix64_next(s);
}

constexpr uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2) {
  return derive_seed(derive_seed(base, s1), s2);
}

// Stream tags used throughout the project.
namespace streams {
inline constexpr uint64_t kPermutation = 0x5045524d;  // "PERM"
inline constexpr uint64_t kChannel = 0x42534343;      // "BSCC"
inline constexpr uint64_t kAliceFrame = 0x46524d41;   // "FRMA"
inline constexpr uint64_t kSession = 0x53455353;      // "SESS"
inline constexpr uint64_t kShuffle = 0x53485546;      // "SHUF"
inline constexpr uint64_t kBiconf = 0x4249434f;       // "BICO"
}  // namespace streams

// All variate generation funnels through this wrapper so the sequence is
// pinned to mt19937_64 (std::shuffle and std::*_distribution are not
// portable across standard libraries).
class Prng {
 public:
  explicit Prng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Unbiased draw in [0, bound) by multiply-shift rejection.
  uint64_t bounded(uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Prng::bounded: bound == 0");
    while (true) {
      uint64_t x = eng_();
      __uint128_t m = static_cast<__uint128_t>(x) * bound;
      auto lo = static_cast<uint64_t>(m);
      if (lo >= bound || lo >= (0ull - bound) % bound) {
        return static_cast<uint64_t>(m >> 64);
      }
    }
  }

  // True with probability p. The threshold p*2^64 is exact for any double
  // p in [0,1), so the acceptance region is pinned bit-for-bit.
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    const double scaled = std::ldexp(p, 64);
    const auto threshold = static_cast<uint64_t>(scaled);
    return eng_() < threshold;
  }

  double unit() { return std::ldexp(static_cast<double>(eng_() >> 11), -53); }

 private:
  std::mt19937_64 eng_;
};

// In-place Fisher-Yates driven by Prng::bounded.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Prng& g) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(g.bounded(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace cascade
