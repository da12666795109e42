#pragma once

// Bit-frame storage, parity computation and permutation machinery shared by
// both parties of a reconciliation session.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cascade/rng.hpp"

namespace cascade {

// Fixed-length packed bit sequence. Word-granular storage keeps block
// parities cheap (XOR + popcount over the covered words).
class Frame {
 public:
  Frame() = default;

  explicit Frame(size_t n, bool fill = false) : n_(n), words_((n + 63) / 64, fill ? ~0ull : 0ull) {
    if (n == 0) throw std::invalid_argument("Frame: length must be >= 1");
    if (fill) mask_tail();
  }

  static Frame random(size_t n, Prng& g) {
    Frame f(n);
    for (auto& w : f.words_) w = g.next_u64();
    f.mask_tail();
    return f;
  }

  size_t size() const { return n_; }

  bool get(size_t i) const {
    check(i);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }

  void set(size_t i, bool v) {
    check(i);
    const uint64_t m = 1ull << (i & 63);
    if (v)
      words_[i >> 6] |= m;
    else
      words_[i >> 6] &= ~m;
  }

  void flip(size_t i) {
    check(i);
    words_[i >> 6] ^= 1ull << (i & 63);
  }

  // Parity (XOR) of the half-open index range [a, b).
  bool parity_range(size_t a, size_t b) const {
    if (a >= b || b > n_) throw std::out_of_range("Frame::parity_range");
    const size_t wa = a >> 6, wb = (b - 1) >> 6;
    const uint64_t head = ~0ull << (a & 63);
    const uint64_t tail = ~0ull >> (63 - ((b - 1) & 63));
    if (wa == wb) return std::popcount(words_[wa] & head & tail) & 1u;
    uint64_t acc = words_[wa] & head;
    for (size_t w = wa + 1; w < wb; ++w) acc ^= words_[w];
    acc ^= words_[wb] & tail;
    return std::popcount(acc) & 1u;
  }

  bool parity_all() const { return parity_range(0, n_); }

  size_t popcount() const {
    size_t c = 0;
    for (uint64_t w : words_) c += std::popcount(w);
    return c;
  }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.n_ == b.n_ && a.words_ == b.words_;
  }

  const std::vector<uint64_t>& words() const { return words_; }

 private:
  void check(size_t i) const {
    if (i >= n_) throw std::out_of_range("Frame: position out of range");
  }

  void mask_tail() {
    const size_t r = n_ & 63;
    if (r) words_.back() &= ~0ull >> (64 - r);
  }

  size_t n_ = 0;
  std::vector<uint64_t> words_;
};

// Count of differing positions. 0 iff the frames are identical.
inline size_t hamming_distance(const Frame& a, const Frame& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
  size_t d = 0;
  for (size_t w = 0; w < a.words().size(); ++w) d += std::popcount(a.words()[w] ^ b.words()[w]);
  return d;
}

// Explicit-position block reference. The protocol engine keeps its own
// range-based representation; this form serves the public parity API and
// test oracles.
struct BlockRef {
  std::vector<uint32_t> positions;
};

// XOR of the bits selected by the block.
inline bool parity(const Frame& frame, const BlockRef& block) {
  bool p = false;
  for (uint32_t i : block.positions) p ^= frame.get(i);
  return p;
}

// Seed-derived bijection on 0..n-1. map[slot] is the source position placed
// at that slot; equal (seed, n) gives an identical mapping on both parties.
struct Permutation {
  uint64_t seed = 0;
  std::vector<uint32_t> map;

  size_t size() const { return map.size(); }

  Frame apply(const Frame& f) const {
    Frame out(map.size());
    for (size_t s = 0; s < map.size(); ++s)
      if (f.get(map[s])) out.set(s, true);
    return out;
  }

  Permutation inverse() const {
    Permutation inv;
    inv.seed = seed;
    inv.map.resize(map.size());
    for (size_t s = 0; s < map.size(); ++s) inv.map[map[s]] = static_cast<uint32_t>(s);
    return inv;
  }
};

inline Permutation identity_permutation(size_t n) {
  Permutation p;
  p.map.resize(n);
  std::iota(p.map.begin(), p.map.end(), 0u);
  return p;
}

inline Permutation make_permutation(uint64_t seed, size_t n) {
  if (n == 0) throw std::invalid_argument("make_permutation: n must be >= 1");
  Permutation p = identity_permutation(n);
  p.seed = seed;
  Prng g(derive_seed(seed, streams::kPermutation));
  deterministic_shuffle(p.map, g);
  return p;
}

}  // namespace cascade
