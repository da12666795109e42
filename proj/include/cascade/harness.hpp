#pragma once

// Monte-Carlo experiment runner: generates correlated frame pairs, drives
// sessions across a QBER grid in parallel, and aggregates per-point reports.
// Results are a pure function of the master seed: per-frame sub-seeds are
// derived from (master, point, frame), and aggregation uses order-independent
// integer sums, so any worker count produces identical output.

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cascade/channel.hpp"
#include "cascade/metrics.hpp"
#include "cascade/protocol.hpp"
#include "cascade/schedules.hpp"

namespace cascade {

struct Experiment {
  std::string variant = "original";             // named variant, or
  std::optional<BlockSchedule> custom_schedule; // explicit schedule
  uint32_t n = 10000;
  std::vector<double> q_grid;                   // true QBERs, each in (0, 0.11]
  std::optional<double> p_init;                 // fixed estimate (rateless); default p = q
  std::optional<uint32_t> passes_override;      // truncate the schedule
  uint64_t frames_per_point = 10000;
  uint64_t master_seed = 1;
  unsigned workers = 0;                         // 0: hardware concurrency
};

namespace detail {

inline BlockSchedule schedule_for(const Experiment& exp, double p) {
  BlockSchedule s;
  if (exp.custom_schedule) {
    s = *exp.custom_schedule;
    s.validate(exp.n);
  } else {
    s = build_schedule({variant_from_string(exp.variant), p, exp.n});
  }
  if (exp.passes_override) s = s.truncated(*exp.passes_override);
  return s;
}

}  // namespace detail

inline void validate(const Experiment& exp) {
  if (exp.frames_per_point < 1) throw ConfigError("experiment: frames_per_point must be >= 1");
  if (exp.q_grid.empty()) throw ConfigError("experiment: empty QBER grid");
  for (double q : exp.q_grid) {
    // q = 0 is the degenerate noiseless case; block sizes then come from
    // p_init, which must be provided.
    if (!(q >= 0.0 && q <= 0.11))
      throw ConfigError("experiment: QBER " + std::to_string(q) + " outside (0, 0.11]");
    if (q == 0.0 && !exp.p_init)
      throw ConfigError("experiment: q = 0 requires an explicit p_init");
    detail::schedule_for(exp, exp.p_init.value_or(q));  // surfaces k1 > n now
  }
  if (exp.p_init && !(*exp.p_init > 0.0 && *exp.p_init <= 0.5))
    throw ConfigError("experiment: p_init outside (0, 0.5]");
}

// Simulate one grid point. point_index keys the seed derivation so grid
// points are independent streams of the master seed.
inline RunReport run_point(const Experiment& exp, uint32_t point_index, double q) {
  const double p = exp.p_init.value_or(q);
  const BlockSchedule sched = detail::schedule_for(exp, p);
  const uint64_t point_seed = derive_seed(exp.master_seed, point_index);

  unsigned workers = exp.workers ? exp.workers : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = static_cast<unsigned>(
      std::min<uint64_t>(workers, exp.frames_per_point));

  std::vector<PartialAgg> partials(workers);
  std::atomic<uint64_t> next{0};
  constexpr uint64_t kChunk = 64;

  auto body = [&](unsigned w) {
    PartialAgg& agg = partials[w];
    while (true) {
      const uint64_t begin = next.fetch_add(kChunk);
      if (begin >= exp.frames_per_point) break;
      const uint64_t end = std::min(begin + kChunk, exp.frames_per_point);
      for (uint64_t f = begin; f < end; ++f) {
        const uint64_t fs = derive_seed(point_seed, f);
        Prng gen(derive_seed(fs, streams::kAliceFrame));
        Frame x = Frame::random(exp.n, gen);
        Frame y = transmit(x, BscModel{q, fs});
        Session session(x, y, sched, derive_seed(fs, streams::kSession));
        session.run();
        const auto o = session.outcome();
        agg.add(o.m, o.rounds, o.residual_errors);
      }
    }
  };

  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }

  PartialAgg total;
  for (const auto& part : partials) total.merge(part);
  return total.finalize(q, p, exp.n, sched.name, exp.master_seed);
}

inline std::vector<RunReport> run_experiment(const Experiment& exp) {
  validate(exp);
  std::vector<RunReport> reports;
  reports.reserve(exp.q_grid.size());
  for (uint32_t i = 0; i < exp.q_grid.size(); ++i) reports.push_back(run_point(exp, i, exp.q_grid[i]));
  return reports;
}

// Rateless mode: block sizes stay pinned to the initial estimate while the
// channel error rate varies.
inline std::vector<RunReport> rateless_sweep(Experiment exp, double p_init) {
  exp.p_init = p_init;
  return run_experiment(exp);
}

// --- output ----------------------------------------------------------------

inline void write_csv(std::ostream& out, const std::vector<RunReport>& reports,
                      uint64_t master_seed) {
  out << "# cascade-recon " << kVersion << " generator=" << kGeneratorId
      << " seed=" << master_seed << "\n";
  out << RunReport::csv_header() << "\n";
  for (const auto& r : reports) out << r.csv_row() << "\n";
}

inline void write_csv_file(const std::string& path, const std::vector<RunReport>& reports,
                           uint64_t master_seed) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file for writing: " + path);
  write_csv(f, reports, master_seed);
}

inline nlohmann::json reports_json(const std::vector<RunReport>& reports,
                                   const Experiment& exp) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["generator"] = kGeneratorId;
  j["seed"] = exp.master_seed;
  j["n"] = exp.n;
  j["variant"] = exp.custom_schedule ? exp.custom_schedule->name : exp.variant;
  if (exp.p_init) j["p_init"] = *exp.p_init;
  if (exp.passes_override) j["passes_override"] = *exp.passes_override;
  j["frames_per_point"] = exp.frames_per_point;
  j["reports"] = reports;
  return j;
}

inline void to_json(nlohmann::json& j, const Experiment& exp) {
  j = nlohmann::json{{"variant", exp.variant},
                     {"n", exp.n},
                     {"q_grid", exp.q_grid},
                     {"frames_per_point", exp.frames_per_point},
                     {"master_seed", exp.master_seed},
                     {"workers", exp.workers}};
  if (exp.custom_schedule) j["custom_schedule"] = *exp.custom_schedule;
  if (exp.p_init) j["p_init"] = *exp.p_init;
  if (exp.passes_override) j["passes_override"] = *exp.passes_override;
}

inline void from_json(const nlohmann::json& j, Experiment& exp) {
  exp = Experiment{};
  exp.variant = j.value("variant", "original");
  exp.n = j.value("n", 10000u);
  if (j.contains("q_grid")) j.at("q_grid").get_to(exp.q_grid);
  exp.frames_per_point = j.value("frames_per_point", uint64_t{10000});
  exp.master_seed = j.value("master_seed", uint64_t{1});
  exp.workers = j.value("workers", 0u);
  if (j.contains("custom_schedule")) exp.custom_schedule = j["custom_schedule"].get<BlockSchedule>();
  if (j.contains("p_init")) exp.p_init = j["p_init"].get<double>();
  if (j.contains("passes_override")) exp.passes_override = j["passes_override"].get<uint32_t>();
}

}  // namespace cascade
