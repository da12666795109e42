#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "cascade/channel.hpp"
#include "cascade/metrics.hpp"
#include "cascade/protocol.hpp"
#include "cascade/transcript.hpp"

using namespace cascade;

namespace {

// Pins permutations / BICONF subsets for specific passes, falling back to
// seeded randomness elsewhere.
struct FixedProvider final : RandomnessProvider {
  std::map<uint32_t, Permutation> perms;
  std::map<uint64_t, std::vector<uint8_t>> masks;
  uint64_t fallback_seed = 4711;

  Permutation pass_permutation(uint32_t pass, uint32_t n) override {
    auto it = perms.find(pass);
    if (it != perms.end()) {
      REQUIRE(it->second.size() == n);
      return it->second;
    }
    return make_permutation(derive_seed(fallback_seed, streams::kShuffle, pass), n);
  }

  std::vector<uint8_t> biconf_subset(uint64_t iter, uint32_t n) override {
    auto it = masks.find(iter);
    if (it != masks.end()) {
      REQUIRE(it->second.size() == n);
      return it->second;
    }
    Prng g(derive_seed(fallback_seed, streams::kBiconf, iter));
    std::vector<uint8_t> mask(n);
    for (auto& b : mask) b = uint8_t(g.next_u64() & 1);
    return mask;
  }
};

BlockSchedule plain_schedule(std::vector<uint32_t> sizes, bool reuse = false) {
  BlockSchedule s;
  s.name = "test";
  s.block_sizes = std::move(sizes);
  s.reuse_subblocks = reuse;
  return s;
}

Frame with_errors(const Frame& x, std::initializer_list<uint32_t> positions) {
  Frame y = x;
  for (uint32_t p : positions) y.flip(p);
  return y;
}

}  // namespace

TEST_CASE("noiseless run discloses only block parities") {
  // m = sum over passes of ceil(n/k_i), minus the inferred final block from
  // pass 2 onward; one batched exchange per pass.
  auto sched = build_schedule({Variant::kOriginal, 0.01, 10000});
  Prng g(21);
  Frame x = Frame::random(10000, g);
  auto out = reconcile(x, x, sched, 99);
  CHECK(out.residual_errors == 0);
  CHECK(out.success);
  CHECK(out.m == 137 + 68 + 34 + 17);
  CHECK(out.rounds == 4);
  CHECK(out.ledger.per_pass_disclosed[0] == 137);
  CHECK(out.ledger.per_pass_disclosed[1] == 68);
  CHECK(out.ledger.per_pass_searches[0] == 0);
}

TEST_CASE("single error is located in ceil(log2 k) bisection parities") {
  Prng g(22);
  Frame x = Frame::random(8, g);
  Frame y = with_errors(x, {5});
  auto out = reconcile(x, y, plain_schedule({8}), 3);
  CHECK(out.success);
  CHECK(out.m == 1 + 3);  // one top parity plus ceil(log2 8) search parities
  CHECK(out.rounds == 1 + 3);
}

TEST_CASE("bisection of a six-bit block matches the hand-built tree") {
  // Halves split 3+3, then 2+1 / 1+1: disclosed search parities per error
  // position are 3,3,2,3,3,2.
  const uint32_t expected[6] = {3, 3, 2, 3, 3, 2};
  Prng g(23);
  Frame x = Frame::random(6, g);
  for (uint32_t pos = 0; pos < 6; ++pos) {
    auto out = reconcile(x, with_errors(x, {pos}), plain_schedule({6}), 5);
    CHECK(out.success);
    CHECK(out.m - 1 == expected[pos]);
  }
}

TEST_CASE("size-one blocks resolve without additional parities") {
  Prng g(24);
  Frame x = Frame::random(4, g);
  Frame y = with_errors(x, {1, 3});
  auto out = reconcile(x, y, plain_schedule({1}), 7);
  CHECK(out.success);
  CHECK(out.m == 4);  // the four block parities and nothing else
  CHECK(out.rounds == 1);
}

TEST_CASE("a flipped bit after reconciliation is repaired by the registry") {
  auto sched = build_schedule({Variant::kOriginal, 0.05, 1000});
  Prng g(25);
  Frame x = Frame::random(1000, g);
  Session s(x, transmit(x, {0.05, 11}), sched, 42);
  s.run();
  REQUIRE(s.outcome().success);
  REQUIRE(s.verify_registry_coherence());

  s.inject_error(123);
  CHECK(hamming_distance(s.reference_frame(), s.working_frame()) == 1);
  s.drain_odd_set();
  CHECK(hamming_distance(s.reference_frame(), s.working_frame()) == 0);
  CHECK(s.verify_registry_coherence());
}

TEST_CASE("cascade corrects masked partners through earlier passes") {
  // Two pairs hide from pass 1; pass 2 sees one error of each pair, and the
  // corrections expose the partners in the pass-1 blocks.
  Prng g(26);
  Frame x = Frame::random(32, g);
  Frame y = with_errors(x, {0, 1, 4, 5});

  FixedProvider prov;
  Permutation p2;
  p2.map = {0, 8,  9,  10, 11, 12, 13, 14,   // A: error 0
            1, 4,  15, 16, 17, 18, 19, 20,   // B: errors 1 and 4 masked
            5, 21, 22, 23, 24, 25, 26, 27,   // C: error 5
            2, 3,  6,  7,  28, 29, 30, 31};  // D: clean
  prov.perms[2] = p2;

  Session s(x, y, plain_schedule({4, 8}), 17, &prov);
  s.run();
  auto out = s.outcome();
  CHECK(out.success);
  CHECK(out.m == 8 + 3 + 6 + 4);  // tops, then 3+3 direct, then 2+2 cascade
  CHECK(out.rounds == 1 + 1 + 3 + 2);
  CHECK(out.ledger.per_pass_searches[1] == 4);
  CHECK(out.ledger.per_pass_searches[0] == 0);
  CHECK(s.verify_registry_coherence());
}

TEST_CASE("an even number of errors remains after every pass") {
  auto sched = build_schedule({Variant::kOriginal, 0.03, 1000});
  for (int rep = 0; rep < 40; ++rep) {
    const uint64_t fs = derive_seed(900, rep);
    Prng g(derive_seed(fs, streams::kAliceFrame));
    Frame x = Frame::random(1000, g);
    Frame y = transmit(x, {0.03, fs});
    Session s(x, y, sched, derive_seed(fs, streams::kSession));
    for (uint32_t pass = 1; pass <= 4; ++pass) {
      s.run_pass(pass);
      CHECK(hamming_distance(s.reference_frame(), s.working_frame()) % 2 == 0);
    }
  }
}

TEST_CASE("passes must run in order") {
  Prng g(27);
  Frame x = Frame::random(100, g);
  Session s(x, x, plain_schedule({10, 20}), 1);
  CHECK_THROWS_AS(s.run_pass(2), std::invalid_argument);
  s.run_pass(1);
  CHECK_THROWS_AS(s.run_pass(1), std::invalid_argument);
}

TEST_CASE("biconf runs s clean iterations on an error-free frame") {
  auto sched = plain_schedule({10, 20});
  sched.biconf = BiconfConfig{10};
  Prng g(28);
  Frame x = Frame::random(100, g);
  auto out = reconcile(x, x, sched, 55);
  CHECK(out.success);
  CHECK(out.m == 10 + 4 + 10);  // pass tops, then one bit per clean iteration
  CHECK(out.rounds == 2 + 10);
  CHECK(out.ledger.biconf_iterations == 10);
}

TEST_CASE("a subset holding both errors masks them; a split detects them") {
  Prng g(29);
  Frame x = Frame::random(16, g);
  Frame y = with_errors(x, {2, 9});

  FixedProvider prov;
  auto sched = plain_schedule({16, 16});
  sched.biconf = BiconfConfig{2};
  std::vector<uint8_t> both(16, 0), split(16, 0), clean(16, 0);
  both[2] = both[9] = 1;
  both[5] = 1;
  split[2] = 1;
  split[6] = split[7] = 1;
  prov.masks[1] = both;
  prov.masks[2] = split;
  prov.masks[3] = clean;
  prov.masks[4] = clean;
  clean[4] = 1;  // non-empty later subsets
  prov.masks[5] = clean;

  Session s(x, y, sched, 7, &prov);
  s.run();
  auto out = s.outcome();
  CHECK(out.success);
  // Iteration 1 masks the pair (even split), iteration 2 splits it and both
  // dichotomic searches fire; two clean iterations then end the phase.
  CHECK(out.ledger.biconf_iterations == 4);
}

TEST_CASE("a lone error is detected by BICONF in two iterations on average") {
  auto sched = plain_schedule({10, 20});
  sched.biconf = BiconfConfig{10};
  Prng g(30);
  Frame x = Frame::random(1000, g);

  uint64_t total_iters = 0;
  constexpr int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Session s(x, x, sched, derive_seed(61, t));
    s.run_pass(1);
    s.run_pass(2);
    s.inject_error(uint32_t(g.bounded(1000)));
    uint32_t streak = 0;
    int iters = 0;
    do {
      streak = s.biconf_round(streak);
      ++iters;
    } while (streak != 0);
    total_iters += iters;
    CHECK(s.outcome().success);
  }
  const double mean = double(total_iters) / trials;
  CHECK(mean > 1.94);
  CHECK(mean < 2.06);
}

TEST_CASE("reconcile is deterministic given its inputs") {
  auto sched = build_schedule({Variant::kOpt4, 0.05, 512});
  Prng g(31);
  Frame x = Frame::random(512, g);
  Frame y = transmit(x, {0.05, 321});
  auto a = reconcile(x, y, sched, 99);
  auto b = reconcile(x, y, sched, 99);
  CHECK(a.m == b.m);
  CHECK(a.rounds == b.rounds);
  CHECK(a.corrected_frame == b.corrected_frame);
}

TEST_CASE("registry stays coherent across variants") {
  Prng g(32);
  for (auto variant : {Variant::kOriginal, Variant::kOpt4, Variant::kOpt6}) {
    auto sched = build_schedule({variant, 0.05, 512});
    for (int rep = 0; rep < 10; ++rep) {
      const uint64_t fs = derive_seed(1300 + int(variant), rep);
      Prng fg(derive_seed(fs, streams::kAliceFrame));
      Frame x = Frame::random(512, fg);
      Frame y = transmit(x, {0.05, fs});
      Session s(x, y, sched, derive_seed(fs, streams::kSession));
      s.run();
      CHECK(s.verify_registry_coherence());
      CHECK(s.quiescent());
    }
  }
}

TEST_CASE("transcripts replay to the ledger totals") {
  auto sched = build_schedule({Variant::kOriginal, 0.03, 500});
  std::stringstream buf;
  TextTranscript sink(buf);
  PartialAgg agg;
  for (int f = 0; f < 20; ++f) {
    const uint64_t fs = derive_seed(7700, f);
    Prng g(derive_seed(fs, streams::kAliceFrame));
    Frame x = Frame::random(500, g);
    Frame y = transmit(x, {0.03, fs});
    sink.frame_begin(f, 500, sched.name, fs);
    auto out = reconcile(x, y, sched, derive_seed(fs, streams::kSession), &sink);
    sink.frame_end(out.ledger, out.residual_errors, out.success);
    agg.add(out);
  }
  auto replayed = replay_verify(buf);
  CHECK(replayed.frames == 20);
  CHECK(replayed.ok());

  // Tampering with a summary must be caught.
  std::string text = buf.str();
  auto pos = text.find("E m=");
  REQUIRE(pos != std::string::npos);
  text[pos + 4] = text[pos + 4] == '9' ? '8' : '9';
  std::stringstream bad(text);
  CHECK_FALSE(replay_verify(bad).ok());
}

TEST_CASE("singletons revealed by a size-2 bisection are both known") {
  Prng g(33);
  Frame x = Frame::random(4, g);
  Frame y = with_errors(x, {0});
  auto sched = plain_schedule({2});
  sched.discard_singletons = true;
  Session s(x, y, sched, 5);
  s.run();
  CHECK(s.outcome().success);
  CHECK(s.known_value_count() == 2);  // the located bit and its sibling
  CHECK(s.active_length() == 2);      // both positions left the frame
}

TEST_CASE("noiseless passes discard nothing") {
  Prng g(34);
  Frame x = Frame::random(64, g);
  auto sched = plain_schedule({8, 16});
  sched.discard_singletons = true;
  Session s(x, x, sched, 6);
  s.run();
  CHECK(s.known_value_count() == 0);
  CHECK(s.active_length() == 64);
}

TEST_CASE("singleton discard shrinks the working frame") {
  auto sched = build_schedule({Variant::kOpt6, 0.05, 4096});
  Prng g(35);
  Frame x = Frame::random(4096, g);
  Frame y = transmit(x, {0.05, 77});
  Session s(x, y, sched, 88);
  s.run();
  CHECK(s.outcome().success);
  CHECK(s.active_length() < 4096);
  CHECK(s.active_length() == 4096 - s.known_value_count());
}

TEST_CASE("known-value positions match the closure of disclosed parities") {
  // Gauss-Jordan elimination over GF(2) on every transmitted parity; a row
  // reduced to a single position pins that bit's value.
  auto sched = build_schedule({Variant::kOpt6, 0.05, 10000});
  Prng g(36);
  Frame x = Frame::random(10000, g);
  Frame y = transmit(x, {0.05, 412});
  Session s(x, y, sched, 413);
  s.set_collect_equations(true);
  s.run();
  REQUIRE(s.outcome().success);

  constexpr size_t kWords = (10000 + 63) / 64;
  using Row = std::vector<uint64_t>;
  std::vector<Row> basis;  // reduced row echelon, pivot = lowest set bit
  std::vector<int> pivots;
  auto lowest = [](const Row& r) {
    for (size_t w = 0; w < kWords; ++w)
      if (r[w]) return int(w * 64 + std::countr_zero(r[w]));
    return -1;
  };
  for (const auto& eq : s.transmitted_equations()) {
    Row row(kWords, 0);
    for (uint32_t p : eq.positions) row[p >> 6] |= 1ull << (p & 63);
    int piv = lowest(row);
    while (piv >= 0) {
      bool folded = false;
      for (size_t i = 0; i < basis.size(); ++i) {
        if (pivots[i] == piv) {
          for (size_t w = 0; w < kWords; ++w) row[w] ^= basis[i][w];
          piv = lowest(row);
          folded = true;
          break;
        }
      }
      if (!folded) break;
    }
    if (piv < 0) continue;
    // fold into existing rows to keep the basis fully reduced
    for (size_t i = 0; i < basis.size(); ++i) {
      if (basis[i][piv >> 6] & (1ull << (piv & 63)))
        for (size_t w = 0; w < kWords; ++w) basis[i][w] ^= row[w];
    }
    basis.push_back(std::move(row));
    pivots.push_back(piv);
  }
  size_t closure_singletons = 0;
  for (const auto& r : basis) {
    size_t bits = 0;
    for (size_t w = 0; w < kWords; ++w) bits += std::popcount(r[w]);
    closure_singletons += bits == 1;
  }
  CHECK(closure_singletons == s.known_value_count());
}

TEST_CASE("constrained spread keeps previous blockmates apart") {
  // k_{i-1} = 2, k_i = n/2: each half receives one bit of every pair.
  for (int seed = 0; seed < 1000; ++seed) {
    Prng g(seed);
    std::vector<std::vector<uint32_t>> pairs;
    for (uint32_t i = 0; i < 32; i += 2) pairs.push_back({i, i + 1});
    auto order = constrained_spread(pairs, 32, 16, g);
    REQUIRE(order.size() == 32);
    std::vector<int> half_of(32);
    for (uint32_t slot = 0; slot < 32; ++slot) half_of[order[slot]] = slot / 16;
    for (uint32_t i = 0; i < 32; i += 2) CHECK(half_of[i] != half_of[i + 1]);
    // also a valid bijection
    std::vector<bool> seen(32, false);
    for (uint32_t v : order) {
      REQUIRE(!seen[v]);
      seen[v] = true;
    }
  }
}

TEST_CASE("infeasible spread geometry falls back to a plain shuffle") {
  Prng g(40);
  std::vector<std::vector<uint32_t>> groups;  // 4 groups of 8, but only 2 bins
  for (uint32_t b = 0; b < 4; ++b) {
    std::vector<uint32_t> grp;
    for (uint32_t i = 0; i < 8; ++i) grp.push_back(b * 8 + i);
    groups.push_back(grp);
  }
  CHECK(constrained_spread(groups, 32, 16, g).empty());

  // The engine must still produce a working pass under the fallback.
  auto sched = plain_schedule({8, 16});
  sched.shuffle_mode = ShuffleMode::kConstrainedRandom;
  Prng fg(41);
  Frame x = Frame::random(32, fg);
  Frame y = transmit(x, {0.1, 5});
  auto out = reconcile(x, y, sched, 42);
  CHECK(out.m > 0);
  CHECK(hamming_distance(out.corrected_frame, x) % 2 == 0);
}

TEST_CASE("constrained shuffling variant runs end to end") {
  auto sched = build_schedule({Variant::kOpt5, 0.05, 1024});
  Prng g(43);
  Frame x = Frame::random(1024, g);
  Frame y = transmit(x, {0.05, 17});
  Session s(x, y, sched, 18);
  s.run();
  CHECK(s.outcome().success);
  CHECK(s.verify_registry_coherence());
}
