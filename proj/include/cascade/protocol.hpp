#pragma once

// Two-party interactive reconciliation state machine: passes, batched parity
// exchange, lockstep dichotomic searches, cascading backtrack corrections,
// BICONF iterations, subblock reuse, singleton discard, and the
// leakage/round ledger.
//
// Both logical parties are simulated in one Session. Alice's frame is the
// reference and never changes; Bob's working frame is corrected in place.
// Message accounting follows two rules: only reference-frame parities count
// toward the disclosed-bit total m (a parity whose value both sides can
// already derive is never counted), and one simultaneous bidirectional
// exchange counts as a single channel use.

#include <array>
#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cascade/bitframe.hpp"
#include "cascade/channel.hpp"
#include "cascade/rng.hpp"
#include "cascade/schedules.hpp"

namespace cascade {

struct LeakageLedger {
  uint64_t parity_bits_disclosed = 0;  // m: transmitted reference parities
  uint64_t rounds = 0;                 // channel uses (message pairs)
  std::vector<uint64_t> per_pass_disclosed;
  std::vector<uint64_t> per_pass_searches;  // b_i: binary searches run per pass
  uint64_t biconf_iterations = 0;
};

struct ReconcileOutcome {
  Frame corrected_frame;
  uint64_t m = 0;
  uint64_t rounds = 0;
  uint64_t residual_errors = 0;
  bool success = false;
  LeakageLedger ledger;
};

// Shared randomness both parties derive from the common seed. Injectable so
// tests and reference oracles can pin the exact permutations and subsets.
class RandomnessProvider {
 public:
  virtual ~RandomnessProvider() = default;
  // Bijection applied before pass `pass_number` (>= 2). The engine never
  // consults the provider for pass 1: no shuffle precedes it.
  virtual Permutation pass_permutation(uint32_t pass_number, uint32_t active_count) = 0;
  // Per-bit fair coin flips selecting a BICONF subset; element i refers to
  // the i-th active position.
  virtual std::vector<uint8_t> biconf_subset(uint64_t iteration, uint32_t active_count) = 0;
};

class SeededProvider final : public RandomnessProvider {
 public:
  explicit SeededProvider(uint64_t seed) : seed_(seed) {}

  Permutation pass_permutation(uint32_t pass_number, uint32_t active_count) override {
    return make_permutation(derive_seed(seed_, streams::kShuffle, pass_number), active_count);
  }

  std::vector<uint8_t> biconf_subset(uint64_t iteration, uint32_t active_count) override {
    Prng g(derive_seed(seed_, streams::kBiconf, iteration));
    std::vector<uint8_t> mask(active_count);
    for (auto& b : mask) b = static_cast<uint8_t>(g.next_u64() & 1u);
    return mask;
  }

 private:
  uint64_t seed_;
};

// Per-round protocol event, consumed by transcript writers.
struct RoundEvent {
  struct ParityRec {
    uint32_t layer, a, b;
    bool ref, work;
    bool transmitted;  // false: value derivable by both sides, never counted
  };
  struct SplitRec {
    uint32_t layer, a, b;
  };
  uint64_t round_index = 0;  // ledger value after commit; 0 for uncounted steps
  bool counted = false;      // true iff at least one parity pair crossed the channel
  uint32_t tx_alice = 0, tx_bob = 0;
  std::vector<ParityRec> parities;
  std::vector<SplitRec> splits;
  std::vector<uint32_t> flips;  // original frame positions corrected
};

class TranscriptSink {
 public:
  virtual ~TranscriptSink() = default;
  virtual void frame_begin(uint64_t frame_index, uint32_t n, const std::string& schedule_name,
                           uint64_t seed) {
    (void)frame_index; (void)n; (void)schedule_name; (void)seed;
  }
  virtual void round(const RoundEvent&) {}
  virtual void frame_end(const LeakageLedger&, uint64_t /*residual*/, bool /*success*/) {}
};

// A transmitted reference parity, exported for linear-algebra test oracles.
struct DisclosedEquation {
  std::vector<uint32_t> positions;  // original coordinates
  bool ref_parity;
};

// Spreads the members of each group over ceil(n/k) consecutive chunks so that
// no two members of one group share a chunk. Groups are served in random
// order onto the emptiest chunks, then each chunk is shuffled. Returns an
// empty vector when some group cannot be spread (caller falls back to an
// unconstrained shuffle).
inline std::vector<uint32_t> constrained_spread(std::vector<std::vector<uint32_t>> groups,
                                                uint32_t n, uint32_t k, Prng& g) {
  const uint32_t bins = (n + k - 1) / k;
  std::vector<uint32_t> cap(bins), group_order(groups.size());
  for (uint32_t j = 0; j < bins; ++j) cap[j] = std::min((j + 1) * k, n) - j * k;
  for (uint32_t j = 0; j < groups.size(); ++j) group_order[j] = j;
  deterministic_shuffle(group_order, g);

  std::vector<std::vector<uint32_t>> members(bins);
  std::vector<uint32_t> bin_ids(bins);
  for (uint32_t j = 0; j < bins; ++j) bin_ids[j] = j;
  for (uint32_t gi : group_order) {
    auto& grp = groups[gi];
    if (grp.size() > bins) return {};
    deterministic_shuffle(grp, g);
    deterministic_shuffle(bin_ids, g);  // random tie order among equal room
    std::stable_sort(bin_ids.begin(), bin_ids.end(), [&](uint32_t x, uint32_t y) {
      return cap[x] - members[x].size() > cap[y] - members[y].size();
    });
    for (size_t t = 0; t < grp.size(); ++t) {
      const uint32_t bin = bin_ids[t];
      if (members[bin].size() >= cap[bin]) return {};
      members[bin].push_back(grp[t]);
    }
  }
  std::vector<uint32_t> order;
  order.reserve(n);
  for (uint32_t j = 0; j < bins; ++j) {
    deterministic_shuffle(members[j], g);
    for (uint32_t v : members[j]) order.push_back(v);
  }
  if (order.size() != n) return {};
  return order;
}

class Session {
 public:
  Session(const Frame& reference, const Frame& working, BlockSchedule schedule, uint64_t seed,
          RandomnessProvider* provider = nullptr, TranscriptSink* sink = nullptr)
      : sched_(std::move(schedule)),
        ref_frame_(reference),
        work_frame_(working),
        seed_(seed),
        provider_(provider),
        sink_(sink),
        reuse_(sched_.reuse_subblocks) {
    if (reference.size() != working.size())
      throw std::invalid_argument("Session: frames must have equal length");
    n_ = static_cast<uint32_t>(reference.size());
    sched_.validate(n_);
    if (!provider_) {
      owned_provider_ = std::make_unique<SeededProvider>(derive_seed(seed, streams::kSession));
      provider_ = owned_provider_.get();
    }
    active_positions_.resize(n_);
    for (uint32_t i = 0; i < n_; ++i) active_positions_[i] = i;
    known_value_.assign(n_, false);
    const uint32_t slots = sched_.cascade_passes() + (sched_.biconf ? 1u : 0u);
    ledger_.per_pass_disclosed.assign(slots, 0);
    ledger_.per_pass_searches.assign(slots, 0);
  }

  // Executes all passes and, when configured, the BICONF phase.
  void run() {
    const uint32_t cascades = sched_.cascade_passes();
    while (next_pass_ <= cascades) run_pass(next_pass_);
    if (sched_.biconf) {
      uint32_t streak = 0;
      while (streak < sched_.biconf->stop_streak) streak = biconf_round(streak);
    }
  }

  // One pass: shuffle, partition, batched parity exchange, drain.
  void run_pass(uint32_t pass_number) {
    if (pass_number != next_pass_ || pass_number > sched_.cascade_passes())
      throw std::invalid_argument("run_pass: passes must be executed in order");
    ++next_pass_;
    cur_slot_ = pass_number - 1;

    Layout lay;
    lay.is_biconf = false;
    const auto nact = static_cast<uint32_t>(active_positions_.size());
    lay.nact = nact;
    lay.k = std::min(sched_.block_sizes[pass_number - 1], nact);
    lay.order_from_active(build_pass_order(pass_number, nact), active_positions_, n_);
    lay.pack_bits(ref_frame_, work_frame_);
    layouts_.push_back(std::move(lay));
    const auto layer = static_cast<uint32_t>(layouts_.size() - 1);
    Layout& L = layouts_.back();

    begin_round();
    frontier_layer_ = layer;
    const uint32_t blocks = (nact + L.k - 1) / L.k;
    for (uint32_t j = 0; j < blocks; ++j) {
      const uint32_t a = j * L.k;
      const uint32_t b = std::min(a + L.k, nact);
      const bool rp = L.ref_bits.parity_range(a, b);
      const bool wp = L.work_bits.parity_range(a, b);
      // From the second pass on, the final block's parity is implied by the
      // other blocks plus the (matching) total of the previous pass.
      const bool transmitted = pass_number == 1 || j + 1 < blocks;
      register_block(layer, a, b, rp, wp, true);
      if (transmitted) count_transmission(layer, a, b, rp, wp);
      else record_inferred(layer, a, b, rp, wp);
    }
    commit_round();

    initial_odd_.clear();
    for (const auto& key : odd_) {
      const uint32_t kl = reuse_ ? key[1] : key[0];
      const uint32_t ka = reuse_ ? key[2] : key[1];
      const uint32_t kb = reuse_ ? key[3] : key[1] + key[2];
      if (kl == layer) initial_odd_.insert(search_key(kl, ka, kb));
    }
    drain_odd_set();
    if (!reuse_) demote_subblocks();
    if (sched_.discard_singletons) apply_singleton_discard();
  }

  // One BICONF iteration. Returns the updated error-free streak.
  uint32_t biconf_round(uint32_t streak) {
    if (next_pass_ <= sched_.cascade_passes())
      throw std::invalid_argument("biconf_round: cascade passes incomplete");
    if (!sched_.biconf) throw std::invalid_argument("biconf_round: schedule has no BICONF phase");
    cur_slot_ = static_cast<uint32_t>(ledger_.per_pass_disclosed.size()) - 1;
    ++ledger_.biconf_iterations;

    Layout lay;
    lay.is_biconf = true;
    const auto nact = static_cast<uint32_t>(active_positions_.size());
    lay.nact = nact;
    const auto mask = provider_->biconf_subset(ledger_.biconf_iterations, nact);
    if (mask.size() != nact) throw std::logic_error("biconf subset mask has wrong length");
    std::vector<uint32_t> order;
    order.reserve(nact);
    for (uint32_t i = 0; i < nact; ++i)
      if (mask[i]) order.push_back(i);
    lay.subset_size = static_cast<uint32_t>(order.size());
    for (uint32_t i = 0; i < nact; ++i)
      if (!mask[i]) order.push_back(i);
    lay.order_from_active(std::move(order), active_positions_, n_);
    lay.pack_bits(ref_frame_, work_frame_);
    layouts_.push_back(std::move(lay));
    const auto layer = static_cast<uint32_t>(layouts_.size() - 1);
    Layout& L = layouts_.back();

    bool found_errors = false;
    const uint32_t sigma = L.subset_size;
    if (sigma > 0 && sigma < nact) {
      const bool rs = L.ref_bits.parity_range(0, sigma);
      const bool ws = L.work_bits.parity_range(0, sigma);
      const bool rc = L.ref_bits.parity_range(sigma, nact);
      const bool wc = L.work_bits.parity_range(sigma, nact);
      begin_round();
      register_block(layer, 0, sigma, rs, ws, true);
      register_block(layer, sigma, nact, rc, wc, true);
      count_transmission(layer, 0, sigma, rs, ws);
      record_inferred(layer, sigma, nact, rc, wc);  // complement: total is known
      commit_round();
      found_errors = rs != ws;
      if (found_errors) {
        frontier_layer_ = layer;
        initial_odd_.clear();
        initial_odd_.insert(search_key(layer, 0, sigma));
        initial_odd_.insert(search_key(layer, sigma, nact));
        drain_odd_set();
      }
    }
    // Degenerate subsets (empty/full) cannot reveal anything: no exchange.
    return found_errors ? 0 : streak + 1;
  }

  // Serves mismatched blocks until quiescence. Without subblock reuse, odd
  // blocks are served earliest-pass-first, one wave at a time; with reuse all
  // odd blocks advance in parallel, one bisection level per round.
  void drain_odd_set() {
    while (true) {
      admit_searches();
      if (active_.empty()) break;  // no eligible mismatches remain
      process_round();
    }
  }

  // Removes positions whose value both parties already know from play in
  // subsequent passes. Leakage is unchanged. Returns positions removed.
  uint32_t apply_singleton_discard() {
    const size_t before = active_positions_.size();
    std::erase_if(active_positions_, [&](uint32_t p) { return known_value_[p]; });
    if (active_positions_.empty())
      active_positions_.push_back(0);  // keep at least one position in play
    return static_cast<uint32_t>(before - active_positions_.size());
  }

  ReconcileOutcome outcome() const {
    ReconcileOutcome o;
    o.corrected_frame = work_frame_;
    o.m = ledger_.parity_bits_disclosed;
    o.rounds = ledger_.rounds;
    o.residual_errors = hamming_distance(ref_frame_, work_frame_);
    o.success = o.residual_errors == 0;
    o.ledger = ledger_;
    return o;
  }

  const LeakageLedger& ledger() const { return ledger_; }
  const Frame& reference_frame() const { return ref_frame_; }
  const Frame& working_frame() const { return work_frame_; }
  bool quiescent() const { return odd_.empty() && active_.empty(); }
  uint32_t active_length() const { return static_cast<uint32_t>(active_positions_.size()); }

  uint32_t known_value_count() const {
    uint32_t c = 0;
    for (bool b : known_value_) c += b;
    return c;
  }

  // Test hook: flip one working-frame bit with full registry bookkeeping, as
  // if the channel had struck after reconciliation.
  void inject_error(uint32_t position) { apply_flip(position, false); }

  // Recomputes every registered parity from the frames and checks odd-set
  // membership. Exhaustive; test use only.
  bool verify_registry_coherence() const {
    for (uint32_t layer = 0; layer < layouts_.size(); ++layer) {
      const Layout& L = layouts_[layer];
      for (const auto& [key, par] : L.registry) {
        const uint32_t a = static_cast<uint32_t>(key >> 32);
        const uint32_t b = static_cast<uint32_t>(key & 0xffffffffu);
        if (L.ref_bits.parity_range(a, b) != par.ref) return false;
        if (L.work_bits.parity_range(a, b) != par.work) return false;
        const bool in_odd = odd_.count(odd_key(layer, a, b)) > 0;
        if (in_odd != (par.cascade_target && par.ref != par.work)) return false;
      }
    }
    return true;
  }

  void set_collect_equations(bool on) { collect_equations_ = on; }

  std::vector<DisclosedEquation> transmitted_equations() const {
    std::vector<DisclosedEquation> out;
    out.reserve(equations_.size());
    for (const auto& [layer, a, b, ref] : equations_) {
      DisclosedEquation eq;
      eq.ref_parity = ref;
      const Layout& L = layouts_[layer];
      for (uint32_t s = a; s < b; ++s) eq.positions.push_back(L.to_orig[s]);
      out.push_back(std::move(eq));
    }
    return out;
  }

 private:
  static constexpr uint32_t kNoSlot = 0xffffffffu;

  struct Parities {
    bool ref, work;
    // Top-level blocks always cascade; search subblocks only do when the
    // schedule reuses them. Non-target entries are still tracked: a parity
    // exchanged once is shared knowledge forever and is never paid for again.
    bool cascade_target;
  };

  struct Layout {
    bool is_biconf = false;
    uint32_t k = 0;            // top block size; unused for BICONF layers
    uint32_t nact = 0;
    uint32_t subset_size = 0;  // BICONF boundary
    std::vector<uint32_t> to_orig;
    std::vector<uint32_t> from_orig;
    Frame ref_bits, work_bits;
    std::unordered_map<uint64_t, Parities> registry;

    static uint64_t key(uint32_t a, uint32_t b) { return (static_cast<uint64_t>(a) << 32) | b; }

    void order_from_active(std::vector<uint32_t> order, const std::vector<uint32_t>& active,
                           uint32_t n) {
      to_orig.resize(order.size());
      for (size_t s = 0; s < order.size(); ++s) to_orig[s] = active[order[s]];
      from_orig.assign(n, kNoSlot);
      for (size_t s = 0; s < to_orig.size(); ++s) from_orig[to_orig[s]] = static_cast<uint32_t>(s);
    }

    void pack_bits(const Frame& ref, const Frame& work) {
      ref_bits = Frame(nact);
      work_bits = Frame(nact);
      for (uint32_t s = 0; s < nact; ++s) {
        if (ref.get(to_orig[s])) ref_bits.set(s, true);
        if (work.get(to_orig[s])) work_bits.set(s, true);
      }
    }

    std::pair<uint32_t, uint32_t> top_block_of(uint32_t slot) const {
      if (is_biconf) {
        if (subset_size == 0 || subset_size == nact) return {0, nact};
        return slot < subset_size ? std::pair<uint32_t, uint32_t>{0, subset_size}
                                  : std::pair<uint32_t, uint32_t>{subset_size, nact};
      }
      const uint32_t a = (slot / k) * k;
      return {a, std::min(a + k, nact)};
    }
  };

  struct Search {
    uint32_t layer;
    uint32_t a0, b0;  // admitted block
    uint32_t a, b;    // current subblock, parity mismatch invariant
    bool ref, work;
    bool done = false;
  };

  // --- ordering keys --------------------------------------------------------

  // Without reuse, waves are selected earliest-pass-first; with reuse the
  // smallest block resolves first within a lockstep level.
  std::array<uint32_t, 4> odd_key(uint32_t layer, uint32_t a, uint32_t b) const {
    if (reuse_) return {b - a, layer, a, b};
    return {layer, a, b - a, b};
  }

  static uint64_t search_key(uint32_t layer, uint32_t a, uint32_t b) {
    return (static_cast<uint64_t>(layer) << 42) ^ (static_cast<uint64_t>(a) << 21) ^ b;
  }

  // --- pass ordering / shuffles ---------------------------------------------

  std::vector<uint32_t> build_pass_order(uint32_t pass_number, uint32_t nact) {
    std::vector<uint32_t> order(nact);
    if (pass_number == 1) {  // errors are i.i.d.: no shuffle before pass 1
      for (uint32_t i = 0; i < nact; ++i) order[i] = i;
      return order;
    }
    if (sched_.shuffle_mode == ShuffleMode::kConstrainedRandom && !layouts_.empty()) {
      if (constrained_order(pass_number, nact, order)) return order;
    }
    Permutation p = provider_->pass_permutation(pass_number, nact);
    if (p.size() != nact) throw std::logic_error("pass permutation has wrong length");
    return p.map;
  }

  // Random order under the constraint that no two members of one previous
  // top-level block land in the same new block. Feasible when the new block
  // count is at least the previous block size; returns false to request the
  // unconstrained fallback.
  bool constrained_order(uint32_t pass_number, uint32_t nact, std::vector<uint32_t>& order) {
    const Layout& prev = layouts_.back();
    if (prev.is_biconf) return false;  // no block structure worth spreading
    const uint32_t k = std::min(sched_.block_sizes[pass_number - 1], nact);
    const uint32_t bins = (nact + k - 1) / k;
    uint32_t prev_block_max = 0;

    // Previous blocks in terms of current active indices.
    std::vector<int64_t> active_index(n_, -1);
    for (uint32_t i = 0; i < nact; ++i) active_index[active_positions_[i]] = i;
    std::vector<std::vector<uint32_t>> groups;
    for (uint32_t a = 0; a < prev.nact; a += prev.k) {
      const uint32_t b = std::min(a + prev.k, prev.nact);
      std::vector<uint32_t> g;
      for (uint32_t s = a; s < b; ++s) {
        const int64_t idx = active_index[prev.to_orig[s]];
        if (idx >= 0) g.push_back(static_cast<uint32_t>(idx));
      }
      if (!g.empty()) {
        prev_block_max = std::max<uint32_t>(prev_block_max, static_cast<uint32_t>(g.size()));
        groups.push_back(std::move(g));
      }
    }
    if (bins < prev_block_max) return false;

    Prng g(derive_seed(seed_, streams::kShuffle, pass_number));
    order = constrained_spread(std::move(groups), nact, k, g);
    return !order.empty();
  }

  // --- registry and odd-set bookkeeping --------------------------------------

  bool registered(const Layout& L, uint32_t a, uint32_t b) const {
    return L.registry.count(Layout::key(a, b)) > 0;
  }

  void register_block(uint32_t layer, uint32_t a, uint32_t b, bool ref, bool work,
                      bool cascade_target) {
    Layout& L = layouts_[layer];
    auto [it, fresh] = L.registry.emplace(Layout::key(a, b), Parities{ref, work, cascade_target});
    if (!fresh) throw std::logic_error("register_block: duplicate registration");
    if (cascade_target && ref != work) odd_.insert(odd_key(layer, a, b));
    if (b - a == 1) note_known_value(L.to_orig[a]);
  }

  void toggle_registered(uint32_t layer, uint32_t a, uint32_t b) {
    Layout& L = layouts_[layer];
    auto it = L.registry.find(Layout::key(a, b));
    if (it == L.registry.end()) throw std::logic_error("toggle_registered: unknown block");
    it->second.work = !it->second.work;
    if (!it->second.cascade_target) return;
    if (it->second.ref != it->second.work)
      odd_.insert(odd_key(layer, a, b));
    else
      odd_.erase(odd_key(layer, a, b));
  }

  void note_known_value(uint32_t position) { known_value_[position] = true; }

  // --- transmission accounting ------------------------------------------------

  void begin_round() {
    round_tx_ = 0;
    if (sink_) ev_ = RoundEvent{};
  }

  void count_transmission(uint32_t layer, uint32_t a, uint32_t b, bool rp, bool wp) {
    ++ledger_.parity_bits_disclosed;
    ++ledger_.per_pass_disclosed[cur_slot_];
    ++round_tx_;
    if (collect_equations_) equations_.push_back({layer, a, b, rp});
    if (sink_) ev_.parities.push_back({layer, a, b, rp, wp, true});
  }

  void record_inferred(uint32_t layer, uint32_t a, uint32_t b, bool rp, bool wp) {
    if (sink_) ev_.parities.push_back({layer, a, b, rp, wp, false});
  }

  void commit_round() {
    const bool counted = round_tx_ > 0;
    if (counted) ++ledger_.rounds;
    if (sink_) {
      ev_.counted = counted;
      ev_.round_index = counted ? ledger_.rounds : 0;
      ev_.tx_alice = round_tx_;
      ev_.tx_bob = round_tx_;  // both directions carry the same block list
      if (counted || !ev_.parities.empty() || !ev_.splits.empty() || !ev_.flips.empty())
        sink_->round(ev_);
    }
    round_tx_ = 0;
  }

  // --- searches ----------------------------------------------------------------

  void start_search(uint32_t layer, uint32_t a, uint32_t b) {
    const Layout& L = layouts_[layer];
    auto it = L.registry.find(Layout::key(a, b));
    if (it == L.registry.end()) throw std::logic_error("start_search: block not registered");
    if (it->second.ref == it->second.work)
      throw std::logic_error("binary search requested on even-parity block");
    active_.push_back(Search{layer, a, b, a, b, it->second.ref, it->second.work, false});
    active_keys_.insert(search_key(layer, a, b));
    ++ledger_.per_pass_searches[cur_slot_];
  }

  void admit_searches() {
    resolve_odd_singletons();
    if (odd_.empty()) return;
    if (!active_.empty()) return;  // strict wave: current searches finish first
    // Mismatches detected by the exchange that opened the frontier layer are
    // served now; frontier blocks that turn odd later keep their (even
    // count of) masked errors until a subsequent exchange uncovers them.
    if (!reuse_) {
      // Serve the earliest eligible pass; its blocks are disjoint.
      uint32_t layer = 0xffffffffu;
      for (const auto& key : odd_)
        if (eligible(key[0], key[1], key[1] + key[2])) layer = std::min(layer, key[0]);
      if (layer == 0xffffffffu) return;
      for (const auto& key : odd_)
        if (key[0] == layer && eligible(key[0], key[1], key[1] + key[2]))
          start_search(key[0], key[1], key[1] + key[2]);
    } else {
      // Earliest eligible pass first; all of its odd blocks regardless of size.
      uint32_t layer = 0xffffffffu;
      for (const auto& key : odd_)
        if (eligible(key[1], key[2], key[3])) layer = std::min(layer, key[1]);
      if (layer == 0xffffffffu) return;
      for (const auto& key : odd_)
        if (key[1] == layer && eligible(key[1], key[2], key[3])) start_search(key[1], key[2], key[3]);
    }
  }

  // The strict reading of backtracking: corrections recurse into completed
  // passes; a frontier-layer block that turns odd mid-drain keeps its masked
  // errors until a later exchange uncovers them. The subblock-reuse variants
  // instead serve every mismatched block as soon as it appears.
  bool eligible(uint32_t layer, uint32_t a, uint32_t b) const {
    if (reuse_) return true;
    if (layer < frontier_layer_) return true;
    return initial_odd_.count(search_key(layer, a, b)) > 0;
  }

  // At quiescence every registered block matches, so clearing the target
  // flag never touches the odd set.
  void demote_subblocks() {
    for (uint32_t layer = 0; layer < layouts_.size(); ++layer) {
      for (auto& [key, par] : layouts_[layer].registry) {
        if (!par.cascade_target) continue;
        const uint32_t a = static_cast<uint32_t>(key >> 32);
        const uint32_t b = static_cast<uint32_t>(key & 0xffffffffu);
        auto [ta, tb] = layouts_[layer].top_block_of(a);
        if (a == ta && b == tb) continue;
        par.cascade_target = false;
        if (par.ref != par.work) odd_.erase(odd_key(layer, a, b));
      }
    }
  }

  // Mismatched singletons resolve with zero additional parities.
  void resolve_odd_singletons() {
    bool again = true;
    while (again) {
      again = false;
      for (const auto& key : odd_) {
        const uint32_t len = reuse_ ? key[0] : key[2];
        if (len != 1) continue;
        const uint32_t layer = reuse_ ? key[1] : key[0];
        const uint32_t a = reuse_ ? key[2] : key[1];
        apply_flip(layouts_[layer].to_orig[a], true);
        again = true;
        break;  // odd_ mutated; restart scan
      }
    }
  }

  void process_round() {
    begin_round();
    std::vector<uint32_t> flips;
    for (auto& s : active_) {
      if (s.done) continue;
      Layout& L = layouts_[s.layer];
      const uint32_t mid = s.a + (s.b - s.a + 1) / 2;  // first half gets the extra bit
      bool rh, wh;
      auto it = L.registry.find(Layout::key(s.a, mid));
      if (it != L.registry.end()) {
        rh = it->second.ref;  // derivable on both sides: free level
        wh = it->second.work;
      } else {
        rh = L.ref_bits.parity_range(s.a, mid);
        wh = L.work_bits.parity_range(s.a, mid);
        count_transmission(s.layer, s.a, mid, rh, wh);
        register_block(s.layer, s.a, mid, rh, wh, true);
        register_block(s.layer, mid, s.b, s.ref ^ rh, s.work ^ wh, true);
        record_inferred(s.layer, mid, s.b, s.ref ^ rh, s.work ^ wh);
      }
      if (sink_) ev_.splits.push_back({s.layer, s.a, s.b});
      if (rh != wh) {
        s.b = mid;
        s.ref = rh;
        s.work = wh;
      } else {
        s.a = mid;
        s.ref = s.ref ^ rh;
        s.work = s.work ^ wh;
      }
      if (s.b - s.a == 1) {
        s.done = true;
        flips.push_back(L.to_orig[s.a]);
      }
    }

    std::unordered_set<uint32_t> flipped;
    for (uint32_t pos : flips) {
      if (!flipped.insert(pos).second) continue;  // convergent searches: flip once
      apply_flip(pos, true);
    }
    commit_round();

    std::erase_if(active_, [&](const Search& s) {
      const bool retire = s.done || s.ref == s.work;  // concluded, or corrected from outside
      if (retire) active_keys_.erase(search_key(s.layer, s.a0, s.b0));
      return retire;
    });
  }

  void apply_flip(uint32_t position, bool from_search) {
    if (from_search && ref_frame_.get(position) == work_frame_.get(position))
      throw std::logic_error("cascade: attempted to flip a non-differing position");
    work_frame_.flip(position);
    for (uint32_t layer = 0; layer < layouts_.size(); ++layer) {
      Layout& L = layouts_[layer];
      const uint32_t slot = L.from_orig[position];
      if (slot == kNoSlot) continue;
      L.work_bits.flip(slot);
      auto [a, b] = L.top_block_of(slot);
      if (registered(L, a, b)) toggle_registered(layer, a, b);
      while (b - a > 1) {
        const uint32_t mid = a + (b - a + 1) / 2;
        if (slot < mid)
          b = mid;
        else
          a = mid;
        if (!registered(L, a, b)) break;
        toggle_registered(layer, a, b);
      }
    }
    for (auto& s : active_) {
      if (s.done) continue;
      const uint32_t slot = layouts_[s.layer].from_orig[position];
      if (slot != kNoSlot && slot >= s.a && slot < s.b) s.work = !s.work;
    }
    if (sink_) ev_.flips.push_back(position);
  }

  // --- members -------------------------------------------------------------

  BlockSchedule sched_;
  Frame ref_frame_, work_frame_;
  uint64_t seed_;
  RandomnessProvider* provider_;
  std::unique_ptr<SeededProvider> owned_provider_;
  TranscriptSink* sink_;
  bool reuse_;
  uint32_t n_ = 0;

  std::vector<Layout> layouts_;
  std::set<std::array<uint32_t, 4>> odd_;
  std::vector<Search> active_;
  std::unordered_set<uint64_t> active_keys_;
  std::vector<uint32_t> active_positions_;
  std::vector<bool> known_value_;

  LeakageLedger ledger_;
  uint32_t next_pass_ = 1;
  uint32_t cur_slot_ = 0;
  uint32_t frontier_layer_ = 0;
  std::unordered_set<uint64_t> initial_odd_;
  uint32_t round_tx_ = 0;
  RoundEvent ev_;

  bool collect_equations_ = false;
  std::vector<std::tuple<uint32_t, uint32_t, uint32_t, bool>> equations_;
};

inline ReconcileOutcome reconcile(const Frame& x, const Frame& y, const BlockSchedule& schedule,
                                  uint64_t seed, TranscriptSink* sink = nullptr) {
  Session s(x, y, schedule, seed, nullptr, sink);
  s.run();
  return s.outcome();
}

}  // namespace cascade
