#pragma once

// Line-oriented session transcript: one record per channel use with the
// parities sent in each direction, blocks split and bits flipped. The replay
// verifier recomputes the ledger counts from the text alone.

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cascade/protocol.hpp"

namespace cascade {

// R <round> A:<tx> B:<tx> [P l:a:b:ra:rb:t|i]... [S l:a:b]... [X pos]...
// V lines are scheduling steps where every parity was derivable: no channel
// use, never counted.
class TextTranscript final : public TranscriptSink {
 public:
  explicit TextTranscript(std::ostream& out) : out_(out) {
    out_ << "# cascade transcript v1 generator=" << kGeneratorId << " version=" << kVersion
         << "\n";
  }

  void frame_begin(uint64_t frame_index, uint32_t n, const std::string& schedule_name,
                   uint64_t seed) override {
    out_ << "F " << frame_index << " n=" << n << " schedule=" << schedule_name
         << " seed=" << seed << "\n";
  }

  void round(const RoundEvent& ev) override {
    out_ << (ev.counted ? "R " : "V ");
    out_ << (ev.counted ? ev.round_index : 0) << " A:" << ev.tx_alice << " B:" << ev.tx_bob;
    for (const auto& p : ev.parities)
      out_ << " P" << p.layer << ':' << p.a << ':' << p.b << ':' << int(p.ref) << ':'
           << int(p.work) << ':' << (p.transmitted ? 't' : 'i');
    for (const auto& s : ev.splits) out_ << " S" << s.layer << ':' << s.a << ':' << s.b;
    for (uint32_t x : ev.flips) out_ << " X" << x;
    out_ << "\n";
  }

  void frame_end(const LeakageLedger& ledger, uint64_t residual, bool success) override {
    out_ << "E m=" << ledger.parity_bits_disclosed << " rounds=" << ledger.rounds
         << " residual=" << residual << " success=" << int(success) << "\n";
  }

 private:
  std::ostream& out_;
};

struct ReplayResult {
  uint64_t frames = 0;
  uint64_t mismatched_frames = 0;
  std::vector<std::string> problems;
  bool ok() const { return frames > 0 && mismatched_frames == 0 && problems.empty(); }
};

// Re-derives m (transmitted reference parities) and the round count from the
// transcript text and compares them with the E summary of each frame.
inline ReplayResult replay_verify(std::istream& in) {
  ReplayResult res;
  uint64_t m = 0, rounds = 0;
  bool in_frame = false;
  std::string line;
  uint64_t frame_id = 0;
  auto fail = [&](const std::string& why) {
    res.problems.push_back("frame " + std::to_string(frame_id) + ": " + why);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "F") {
      if (in_frame) fail("missing E record");
      ls >> frame_id;
      in_frame = true;
      m = rounds = 0;
    } else if (tag == "R" || tag == "V") {
      if (!in_frame) {
        fail("round record outside a frame");
        continue;
      }
      uint64_t idx;
      ls >> idx;
      std::string tok;
      uint32_t tx_alice = 0;
      bool any_tx = false;
      while (ls >> tok) {
        if (tok.rfind("A:", 0) == 0) tx_alice = std::stoul(tok.substr(2));
        if (tok[0] == 'P' && tok.back() == 't') any_tx = true;
      }
      // A parity is counted only when marked transmitted.
      uint32_t counted = 0;
      {
        std::istringstream again(line);
        std::string t2;
        while (again >> t2)
          if (t2[0] == 'P' && t2.back() == 't') ++counted;
      }
      if (counted != tx_alice) fail("A: count disagrees with transmitted parity records");
      if (tag == "R") {
        if (!any_tx) fail("counted round carries no transmitted parity");
        ++rounds;
        m += counted;
      } else if (any_tx) {
        fail("uncounted step carries a transmitted parity");
      }
    } else if (tag == "E") {
      if (!in_frame) {
        fail("summary outside a frame");
        continue;
      }
      in_frame = false;
      ++res.frames;
      uint64_t em = 0, erounds = 0;
      std::string tok;
      while (ls >> tok) {
        if (tok.rfind("m=", 0) == 0) em = std::stoull(tok.substr(2));
        if (tok.rfind("rounds=", 0) == 0) erounds = std::stoull(tok.substr(7));
      }
      if (em != m || erounds != rounds) {
        ++res.mismatched_frames;
        fail("ledger says m=" + std::to_string(em) + " rounds=" + std::to_string(erounds) +
             ", transcript replays m=" + std::to_string(m) + " rounds=" + std::to_string(rounds));
      }
    } else {
      fail("unknown record tag '" + tag + "'");
    }
  }
  if (in_frame) res.problems.push_back("transcript ends inside a frame");
  return res;
}

}  // namespace cascade
