// Command-line front end: single runs, QBER sweeps, rateless sweeps, block
// size optimization, variant comparison and transcript replay.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cascade/harness.hpp"
#include "cascade/optimizer.hpp"
#include "cascade/transcript.hpp"

namespace {

using namespace cascade;

// "start:stop:step" (inclusive endpoints, within rounding slack) or a single
// value.
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> grid;
  const auto c1 = spec.find(':');
  if (c1 == std::string::npos) {
    grid.push_back(std::stod(spec));
    return grid;
  }
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) throw ConfigError("grid must be start:stop:step");
  const double start = std::stod(spec.substr(0, c1));
  const double stop = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
  const double step = std::stod(spec.substr(c2 + 1));
  if (step <= 0 || stop < start) throw ConfigError("grid must satisfy start <= stop, step > 0");
  for (double q = start; q <= stop + step * 1e-9; q += step) grid.push_back(q);
  return grid;
}

void print_reports(const std::vector<RunReport>& reports, uint64_t seed) {
  write_csv(std::cout, reports, seed);
}

void emit(const std::vector<RunReport>& reports, const Experiment& exp, const std::string& csv,
          const std::string& json_path) {
  print_reports(reports, exp.master_seed);
  if (!csv.empty()) write_csv_file(csv, reports, exp.master_seed);
  if (!json_path.empty()) {
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open output file for writing: " + json_path);
    f << reports_json(reports, exp).dump(2) << "\n";
  }
}

BlockSchedule load_schedule_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read schedule file: " + path);
  nlohmann::json j;
  f >> j;
  return j.get<BlockSchedule>();
}

struct CommonOpts {
  std::string variant = "original";
  std::string schedule_file;
  uint32_t n = 10000;
  uint64_t frames = 10000;
  uint64_t seed = 1;
  unsigned workers = 0;
  uint32_t passes = 0;
  std::string out_csv, out_json, config_file;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--variant", o.variant,
                  "original|mod1|opt2..opt7|opt8-table|opt8-formula|custom");
  cmd->add_option("--schedule", o.schedule_file, "JSON schedule file (variant=custom)");
  cmd->add_option("--n", o.n, "frame length in bits");
  cmd->add_option("--frames", o.frames, "frames per grid point");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--workers", o.workers, "worker threads (0: all cores)");
  cmd->add_option("--passes", o.passes, "truncate the schedule to this many passes");
  cmd->add_option("--out", o.out_csv, "CSV output path");
  cmd->add_option("--json", o.out_json, "JSON output path");
  cmd->add_option("--config", o.config_file, "JSON experiment config; overrides flags");
}

Experiment to_experiment(const CommonOpts& o, const std::vector<double>& grid) {
  Experiment exp;
  exp.variant = o.variant;
  if (!o.schedule_file.empty()) exp.custom_schedule = load_schedule_file(o.schedule_file);
  exp.n = o.n;
  exp.q_grid = grid;
  exp.frames_per_point = o.frames;
  exp.master_seed = o.seed;
  exp.workers = o.workers;
  if (o.passes) exp.passes_override = o.passes;
  if (!o.config_file.empty()) {
    std::ifstream f(o.config_file);
    if (!f) throw ConfigError("cannot read config file: " + o.config_file);
    nlohmann::json j;
    f >> j;
    Experiment from_file = exp;
    from_json(j, from_file);
    if (!j.contains("q_grid")) from_file.q_grid = exp.q_grid;
    exp = from_file;
  }
  return exp;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cascade-recon: interactive information-reconciliation simulator"};
  app.require_subcommand(1);

  CommonOpts run_o, sweep_o, rateless_o, optimize_o, compare_o;
  std::string run_q = "0.02", sweep_q = "0.01:0.11:0.005", rateless_q = "0.01:0.11:0.005";
  double run_p = 0.0, rateless_p = 0.01;
  std::string transcript_path;

  auto* run = app.add_subcommand("run", "reconcile frames at one grid point");
  add_common(run, run_o);
  run->add_option("--q", run_q, "true channel error rate");
  run->add_option("--p", run_p, "initialization estimate (default: q)");
  run->add_option("--transcript", transcript_path, "write a per-frame protocol transcript");

  auto* sweep = app.add_subcommand("sweep", "sweep the true QBER grid (p = q per point)");
  add_common(sweep, sweep_o);
  sweep->add_option("--q", sweep_q, "QBER grid start:stop:step");

  auto* rateless = app.add_subcommand("rateless", "fixed initialization p, varying true QBER");
  add_common(rateless, rateless_o);
  rateless->add_option("--p", rateless_p, "fixed initialization estimate")->required();
  rateless->add_option("--q", rateless_q, "QBER grid start:stop:step");

  auto* optimize = app.add_subcommand("optimize", "search block sizes minimizing eta_EC");
  add_common(optimize, optimize_o);
  std::string opt_method = "compass", opt_q = "0.02", history_path;
  std::vector<uint32_t> opt_init;
  std::vector<std::string> pow2_grid;
  double opt_delta0 = 0.0, opt_min_delta = 1.0;
  uint64_t opt_budget = 200;
  optimize->add_option("--method", opt_method, "compass | pow2sweep");
  optimize->add_option("--q", opt_q, "channel error rate");
  optimize->add_option("--init", opt_init, "starting sizes k1 k2 [k3] (default 1/q, 2/q)");
  optimize->add_option("--delta0", opt_delta0, "initial compass step (default k1)");
  optimize->add_option("--min-delta", opt_min_delta, "compass stop threshold");
  optimize->add_option("--budget", opt_budget, "max objective evaluations");
  optimize->add_option("--grid", pow2_grid,
                       "pow2sweep axes, comma-separated sizes per axis, e.g. 8,16,32 128,256");
  optimize->add_option("--history", history_path, "evaluation history CSV path");

  auto* compare = app.add_subcommand("compare", "run several variants at one grid point");
  add_common(compare, compare_o);
  std::string cmp_variants = "original,mod1,opt3", cmp_q = "0.02";
  compare->add_option("--variants", cmp_variants, "comma-separated variant names");
  compare->add_option("--q", cmp_q, "channel error rate");

  auto* replay = app.add_subcommand("replay", "verify ledger counts against a transcript");
  replay->add_option("--transcript", transcript_path, "transcript file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto exp = to_experiment(run_o, parse_grid(run_q));
      if (run_p > 0.0) exp.p_init = run_p;
      if (!transcript_path.empty()) {
        // Transcripts need the frame loop inline.
        validate(exp);
        std::ofstream tf(transcript_path, std::ios::trunc);
        if (!tf) throw std::runtime_error("cannot open output file for writing: " + transcript_path);
        TextTranscript sink(tf);
        const double q = exp.q_grid.front();
        const double p = exp.p_init.value_or(q);
        auto sched = detail::schedule_for(exp, p);
        const uint64_t point_seed = derive_seed(exp.master_seed, 0);
        PartialAgg agg;
        for (uint64_t f = 0; f < exp.frames_per_point; ++f) {
          const uint64_t fs = derive_seed(point_seed, f);
          Prng gen(derive_seed(fs, streams::kAliceFrame));
          Frame x = Frame::random(exp.n, gen);
          Frame y = transmit(x, BscModel{q, fs});
          sink.frame_begin(f, exp.n, sched.name, fs);
          auto out = reconcile(x, y, sched, derive_seed(fs, streams::kSession), &sink);
          sink.frame_end(out.ledger, out.residual_errors, out.success);
          agg.add(out);
        }
        emit({agg.finalize(q, p, exp.n, sched.name, exp.master_seed)}, exp, run_o.out_csv,
             run_o.out_json);
      } else {
        emit(run_experiment(exp), exp, run_o.out_csv, run_o.out_json);
      }
    } else if (sweep->parsed()) {
      auto exp = to_experiment(sweep_o, parse_grid(sweep_q));
      emit(run_experiment(exp), exp, sweep_o.out_csv, sweep_o.out_json);
    } else if (rateless->parsed()) {
      auto exp = to_experiment(rateless_o, parse_grid(rateless_q));
      emit(rateless_sweep(exp, rateless_p), exp, rateless_o.out_csv, rateless_o.out_json);
    } else if (optimize->parsed()) {
      const double q = std::stod(opt_q);
      auto obj = make_mc_objective(optimize_o.n, q, optimize_o.frames, optimize_o.seed,
                                   optimize_o.passes ? optimize_o.passes : 14,
                                   optimize_o.workers);
      std::vector<Evaluation> history;
      if (opt_method == "compass") {
        std::vector<uint32_t> init = opt_init;
        if (init.empty())
          init = {detail::ceil_tol(1.0 / q), 2 * detail::ceil_tol(1.0 / q)};
        CompassOptions copt;
        copt.delta0 = opt_delta0;
        copt.min_delta = opt_min_delta;
        copt.max_evaluations = opt_budget;
        copt.size_ceiling = optimize_o.n;
        auto res = compass_search(obj, init, copt);
        std::cout << "best:";
        for (auto k : res.best) std::cout << ' ' << k;
        std::cout << "  eta_ec=" << res.best_eta << "  evaluations=" << res.evaluations << "\n";
        history = res.history;
      } else if (opt_method == "pow2sweep") {
        if (pow2_grid.empty()) throw ConfigError("pow2sweep needs --grid axes");
        std::vector<std::vector<uint32_t>> axes;
        for (const auto& axis : pow2_grid) {
          std::vector<uint32_t> vals;
          std::stringstream ss(axis);
          std::string tok;
          while (std::getline(ss, tok, ',')) vals.push_back(std::stoul(tok));
          axes.push_back(vals);
        }
        auto ranked = power_of_two_sweep(obj, axes);
        std::cout << "rank,k1,k2,k3,eta_ec,se\n";
        for (size_t i = 0; i < ranked.size(); ++i) {
          std::cout << i + 1;
          for (size_t d = 0; d < 3; ++d)
            std::cout << ',' << (d < ranked[i].sizes.size() ? std::to_string(ranked[i].sizes[d]) : "");
          std::cout << ',' << detail::num(ranked[i].eta) << ',' << detail::num(ranked[i].se)
                    << "\n";
        }
        history = ranked;
      } else {
        throw ConfigError("unknown optimize method: " + opt_method);
      }
      if (!history_path.empty()) {
        std::ofstream hf(history_path, std::ios::trunc);
        if (!hf) throw std::runtime_error("cannot open output file for writing: " + history_path);
        write_history_csv(hf, history, optimize_o.seed);
      }
    } else if (compare->parsed()) {
      std::vector<RunReport> all;
      Experiment last;
      std::stringstream ss(cmp_variants);
      std::string name;
      while (std::getline(ss, name, ',')) {
        CommonOpts o = compare_o;
        o.variant = name;
        auto exp = to_experiment(o, parse_grid(cmp_q));
        auto reps = run_experiment(exp);
        all.insert(all.end(), reps.begin(), reps.end());
        last = exp;
      }
      emit(all, last, compare_o.out_csv, compare_o.out_json);
    } else if (replay->parsed()) {
      std::ifstream tf(transcript_path);
      if (!tf) throw std::runtime_error("cannot read transcript: " + transcript_path);
      auto res = replay_verify(tf);
      std::cout << "frames=" << res.frames << " mismatched=" << res.mismatched_frames << "\n";
      for (const auto& p : res.problems) std::cout << "problem: " << p << "\n";
      if (!res.ok()) {
        std::cerr << "transcript is inconsistent with its ledger summaries\n";
        return 1;
      }
      std::cout << "transcript consistent\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
