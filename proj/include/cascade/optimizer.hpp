#pragma once

// Derivative-free block-size optimization: Compass search over (k1, k2[, k3])
// minimizing the FER-penalised efficiency, and an exhaustive power-of-two
// sweep. Candidates share common random numbers (the same master seed drives
// every evaluation) so nearby points are compared on identical noise.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascade/harness.hpp"
#include "cascade/metrics.hpp"

namespace cascade {

struct Evaluation {
  std::vector<uint32_t> sizes;
  double eta = 0.0;
  double se = 0.0;  // jackknife-free proxy: sem of m scaled into eta units
  RunReport report;
};

using Objective = std::function<Evaluation(const std::vector<uint32_t>&)>;

// Monte-Carlo objective: 14 passes, subblock reuse, plateau ceil(n/2) beyond
// the candidate sizes.
inline Objective make_mc_objective(uint32_t n, double q, uint64_t frames, uint64_t master_seed,
                                   uint32_t passes = 14, unsigned workers = 0) {
  return [=](const std::vector<uint32_t>& sizes) {
    if (sizes.empty() || sizes.size() > passes)
      throw std::invalid_argument("objective: need between 1 and `passes` block sizes");
    BlockSchedule s;
    s.name = "candidate";
    s.block_sizes = sizes;
    while (s.block_sizes.size() < passes) s.block_sizes.push_back((n + 1) / 2);
    s.reuse_subblocks = true;
    Experiment exp;
    exp.custom_schedule = s;
    exp.n = n;
    exp.q_grid = {q};
    exp.frames_per_point = frames;
    exp.master_seed = master_seed;
    exp.workers = workers;
    const RunReport r = run_experiment(exp).front();
    Evaluation ev;
    ev.sizes = sizes;
    ev.eta = r.eta_ec;
    ev.se = (1.0 - r.fer) * r.sem_m / (static_cast<double>(n) * binary_entropy(q));
    ev.report = r;
    return ev;
  };
}

struct CompassOptions {
  double delta0 = 0.0;        // initial step; 0 picks k1 (the usual choice)
  double min_delta = 1.0;     // stop once delta falls below this
  uint64_t max_evaluations = 1000;
  uint32_t size_floor = 1;
  uint32_t size_ceiling = 1u << 30;  // typically the frame length
  bool power_of_two = false;  // probe k*2 / k/2 instead of k +/- delta
};

struct CompassResult {
  std::vector<uint32_t> best;
  double best_eta = 0.0;
  uint64_t evaluations = 0;
  std::vector<double> delta_trace;  // delta after each non-improving iteration
  std::vector<Evaluation> history;
};

// Probes every coordinate +/-delta (k1 first, + before -), moves to the best
// improving probe, otherwise shrinks delta by 20%.
inline CompassResult compass_search(const Objective& objective, std::vector<uint32_t> init,
                                    CompassOptions opt = {}) {
  if (init.empty()) throw std::invalid_argument("compass_search: empty starting point");
  CompassResult res;
  std::map<std::vector<uint32_t>, Evaluation> cache;

  auto eval = [&](const std::vector<uint32_t>& pt) -> const Evaluation& {
    auto it = cache.find(pt);
    if (it == cache.end()) {
      ++res.evaluations;
      it = cache.emplace(pt, objective(pt)).first;
      res.history.push_back(it->second);
    }
    return it->second;
  };

  double delta = opt.delta0 > 0.0 ? opt.delta0 : static_cast<double>(init.front());
  res.best = std::move(init);
  res.best_eta = eval(res.best).eta;

  while (res.evaluations < opt.max_evaluations && delta >= opt.min_delta) {
    const auto step = static_cast<int64_t>(std::llround(delta));
    std::vector<std::vector<uint32_t>> probes;
    for (size_t d = 0; d < res.best.size(); ++d) {
      for (int sign : {+1, -1}) {
        const auto k = static_cast<int64_t>(res.best[d]);
        int64_t k2;
        if (opt.power_of_two)
          k2 = sign > 0 ? k * 2 : k / 2;
        else
          k2 = k + sign * step;
        if (k2 < static_cast<int64_t>(opt.size_floor) ||
            k2 > static_cast<int64_t>(opt.size_ceiling))
          continue;  // out-of-range probe treated as non-improving
        auto pt = res.best;
        pt[d] = static_cast<uint32_t>(k2);
        probes.push_back(std::move(pt));
      }
    }
    const std::vector<uint32_t>* winner = nullptr;
    double winner_eta = res.best_eta;
    for (const auto& pt : probes) {
      if (res.evaluations >= opt.max_evaluations) break;
      const double e = eval(pt).eta;
      if (e < winner_eta) {  // strict improvement; ties keep probe order
        winner_eta = e;
        winner = &pt;
      }
    }
    if (winner) {
      res.best = *winner;
      res.best_eta = winner_eta;
    } else {
      if (opt.power_of_two) break;  // doubling lattice has no finer step
      delta = delta * 4.0 / 5.0;
      res.delta_trace.push_back(delta);
    }
  }
  return res;
}

struct SweepEntry {
  Evaluation eval;
};

// Exhaustive evaluation of a power-of-two grid, ranked by eta (ascending).
// Ties rank by candidate order, which is the grid's lexicographic order.
inline std::vector<Evaluation> power_of_two_sweep(const Objective& objective,
                                                  const std::vector<std::vector<uint32_t>>& grids) {
  if (grids.empty()) throw std::invalid_argument("power_of_two_sweep: empty grid");
  for (const auto& g : grids)
    if (g.empty()) throw std::invalid_argument("power_of_two_sweep: empty candidate axis");
  std::vector<Evaluation> results;
  std::vector<size_t> idx(grids.size(), 0);
  while (true) {
    std::vector<uint32_t> pt(grids.size());
    for (size_t d = 0; d < grids.size(); ++d) pt[d] = grids[d][idx[d]];
    results.push_back(objective(pt));
    size_t d = grids.size();
    while (d > 0) {
      --d;
      if (++idx[d] < grids[d].size()) break;
      idx[d] = 0;
      if (d == 0) {
        std::stable_sort(results.begin(), results.end(),
                         [](const Evaluation& a, const Evaluation& b) { return a.eta < b.eta; });
        return results;
      }
    }
  }
}

inline void write_history_csv(std::ostream& out, const std::vector<Evaluation>& history,
                              uint64_t seed) {
  out << "# cascade-recon " << kVersion << " generator=" << kGeneratorId << " seed=" << seed
      << "\n";
  out << "k1,k2,k3,eta_ec,se,frames\n";
  for (const auto& ev : history) {
    for (size_t d = 0; d < 3; ++d) {
      if (d < ev.sizes.size()) out << ev.sizes[d];
      out << ',';
    }
    out << detail::num(ev.eta) << ',' << detail::num(ev.se) << ',' << ev.report.frames << "\n";
  }
}

}  // namespace cascade
