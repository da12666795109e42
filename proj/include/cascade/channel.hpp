#pragma once

// Binary symmetric channel used to produce the noisy working frame from the
// reference frame. Errors are i.i.d. bit flips with the crossover
// probability; the flip pattern is a pure function of (q, seed).

#include <cstdint>
#include <stdexcept>

#include "cascade/bitframe.hpp"
#include "cascade/rng.hpp"

namespace cascade {

struct BscModel {
  double q = 0.0;     // crossover probability (QBER), in [0, 0.5]
  uint64_t seed = 0;  // per-frame seed; harness derives it from the master seed
};

inline void validate(const BscModel& m) {
  if (!(m.q >= 0.0 && m.q <= 0.5))
    throw std::invalid_argument("BscModel: crossover probability must be in [0, 0.5]");
}

inline Frame transmit(const Frame& x, const BscModel& model) {
  validate(model);
  Frame y = x;
  if (model.q == 0.0) return y;
  Prng g(derive_seed(model.seed, streams::kChannel));
  for (size_t i = 0; i < y.size(); ++i)
    if (g.bernoulli(model.q)) y.flip(i);
  return y;
}

}  // namespace cascade
