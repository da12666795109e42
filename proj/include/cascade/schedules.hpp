#pragma once

// Catalog of block-size schedules: one constructor per protocol variant plus
// user-defined schedules loaded from JSON.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cascade {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ShuffleMode { kRandom, kConstrainedRandom };

struct BiconfConfig {
  uint32_t stop_streak = 10;  // s consecutive error-free iterations
};

struct BlockSchedule {
  std::string name = "custom";
  std::vector<uint32_t> block_sizes;  // k_i for pass i = 1..T
  std::optional<BiconfConfig> biconf; // when present, replaces passes 3..T
  bool reuse_subblocks = false;
  ShuffleMode shuffle_mode = ShuffleMode::kRandom;
  bool discard_singletons = false;
  std::vector<std::string> notes;     // warnings recorded at build time

  uint32_t total_passes() const { return static_cast<uint32_t>(block_sizes.size()); }

  // Number of parity-exchange passes actually executed before BICONF takes
  // over (BICONF keeps only the first two).
  uint32_t cascade_passes() const {
    const auto t = total_passes();
    return biconf ? std::min<uint32_t>(2, t) : t;
  }

  void validate(uint32_t n) const {
    if (block_sizes.empty()) throw ConfigError("schedule has no passes");
    for (uint32_t k : block_sizes) {
      if (k < 1) throw ConfigError("schedule: block size must be >= 1");
      if (k > n) throw ConfigError("schedule: block size exceeds frame length");
    }
  }

  BlockSchedule truncated(uint32_t passes) const {
    if (passes == 0 || passes > total_passes())
      throw ConfigError("truncated: pass count out of range");
    BlockSchedule s = *this;
    s.block_sizes.resize(passes);
    if (s.biconf && passes <= 2) s.biconf.reset();
    s.name += "@" + std::to_string(passes) + "p";
    return s;
  }
};

enum class Variant {
  kOriginal,
  kMod1,
  kOpt2,
  kOpt3,
  kOpt4,
  kOpt5,
  kOpt6,
  kOpt7,
  kOpt8Table,
  kOpt8Formula,
  kCustom,
};

inline Variant variant_from_string(const std::string& s) {
  if (s == "original") return Variant::kOriginal;
  if (s == "mod1") return Variant::kMod1;
  if (s == "opt2") return Variant::kOpt2;
  if (s == "opt3") return Variant::kOpt3;
  if (s == "opt4") return Variant::kOpt4;
  if (s == "opt5") return Variant::kOpt5;
  if (s == "opt6") return Variant::kOpt6;
  if (s == "opt7") return Variant::kOpt7;
  if (s == "opt8" || s == "opt8-table") return Variant::kOpt8Table;
  if (s == "opt8-formula") return Variant::kOpt8Formula;
  if (s == "custom") return Variant::kCustom;
  throw ConfigError("unknown variant name: " + s);
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kOriginal: return "original";
    case Variant::kMod1: return "mod1";
    case Variant::kOpt2: return "opt2";
    case Variant::kOpt3: return "opt3";
    case Variant::kOpt4: return "opt4";
    case Variant::kOpt5: return "opt5";
    case Variant::kOpt6: return "opt6";
    case Variant::kOpt7: return "opt7";
    case Variant::kOpt8Table: return "opt8-table";
    case Variant::kOpt8Formula: return "opt8-formula";
    case Variant::kCustom: return "custom";
  }
  return "?";
}

struct ScheduleRequest {
  Variant variant = Variant::kOriginal;
  double p_estimate = 0.01;  // error-rate estimate used to size blocks
  uint32_t n = 10000;        // frame length
};

namespace detail {

// ceil/floor with a relative guard so that formula values sitting on an
// integer are not pushed to the neighbour by floating-point noise.
inline uint32_t ceil_tol(double x) {
  return static_cast<uint32_t>(std::ceil(x - 1e-9 * std::max(1.0, std::fabs(x))));
}
inline uint32_t floor_tol(double x) {
  return static_cast<uint32_t>(std::floor(x + 1e-9 * std::max(1.0, std::fabs(x))));
}
inline uint32_t pow2_at_least(double exponent) {
  return 1u << ceil_tol(exponent);
}

// Tabulated near-optimal (k1, k2, k3) per QBER for n = 2^14, 14 passes,
// subblock reuse on. Selected by nearest tabulated QBER.
struct Opt8Row {
  double q;
  uint32_t k1, k2, k3;
};
inline constexpr Opt8Row kOpt8Table[] = {
    {0.005, 256, 1024, 4096}, {0.01, 128, 512, 4096}, {0.02, 64, 512, 4096},
    {0.03, 32, 512, 4096},    {0.04, 32, 256, 4096},  {0.05, 16, 256, 4096},
    {0.06, 16, 256, 4096},    {0.07, 16, 256, 4096},  {0.08, 8, 256, 4096},
    {0.09, 8, 256, 4096},     {0.10, 8, 256, 4096},   {0.11, 8, 256, 4096},
};

}  // namespace detail

// Expected number of errors in a first-pass block of size ceil(1/q) after
// the pass completes.
inline double expected_errors_after_pass1(double q) {
  if (!(q > 0.0 && q <= 0.5))
    throw std::invalid_argument("expected_errors_after_pass1: q must be in (0, 0.5]");
  const auto k1 = detail::ceil_tol(1.0 / q);
  return (1.0 + std::pow(1.0 - 2.0 * q, static_cast<double>(k1))) / 2.0;
}

inline BlockSchedule build_schedule(const ScheduleRequest& req) {
  if (!(req.p_estimate > 0.0 && req.p_estimate <= 0.5))
    throw ConfigError("build_schedule: p_estimate must be in (0, 0.5]");
  if (req.n < 1) throw ConfigError("build_schedule: n must be >= 1");

  const double p = req.p_estimate;
  const uint32_t n = req.n;
  const uint32_t half = (n + 1) / 2;
  BlockSchedule s;
  s.name = to_string(req.variant);

  auto fill_plateau = [&](uint32_t upto) {
    while (s.block_sizes.size() < upto) s.block_sizes.push_back(half);
  };
  auto clamp_sizes = [&] {
    for (auto& k : s.block_sizes) k = std::min(k, n);
  };

  switch (req.variant) {
    case Variant::kOriginal: {
      const uint32_t k1 = detail::ceil_tol(0.73 / p);
      s.block_sizes = {k1, 2 * k1, 4 * k1, 8 * k1};
      break;
    }
    case Variant::kMod1: {
      const double c = 4.0 * std::log(2.0);
      const uint32_t k1 = detail::floor_tol(c / (3.0 * p));
      const uint32_t k2 = detail::floor_tol(c / p);
      if (k1 < 1) throw ConfigError("mod1: p too large, first block size vanishes");
      s.block_sizes = {k1, k2};
      s.biconf = BiconfConfig{10};
      break;
    }
    case Variant::kOpt2: {
      const uint32_t k1 = detail::ceil_tol(0.8 / p);
      s.block_sizes = {k1, 5 * k1};
      fill_plateau(10);
      break;
    }
    case Variant::kOpt3:
    case Variant::kOpt4:
    case Variant::kOpt5:
    case Variant::kOpt6: {
      const uint32_t k1 = detail::ceil_tol(1.0 / p);
      s.block_sizes = {k1, 2 * k1};
      fill_plateau(16);
      s.reuse_subblocks = req.variant != Variant::kOpt3;
      if (req.variant == Variant::kOpt5) s.shuffle_mode = ShuffleMode::kConstrainedRandom;
      if (req.variant == Variant::kOpt6) s.discard_singletons = true;
      break;
    }
    case Variant::kOpt7: {
      const uint32_t k1 = detail::pow2_at_least(std::log2(1.0 / p));
      s.block_sizes = {k1, 4 * k1};
      fill_plateau(14);
      s.reuse_subblocks = true;
      break;
    }
    case Variant::kOpt8Formula: {
      const double alpha = std::log2(1.0 / p) - 0.5;
      s.block_sizes = {detail::pow2_at_least(alpha), detail::pow2_at_least((alpha + 12.0) / 2.0),
                       4096};
      fill_plateau(14);
      s.reuse_subblocks = true;
      if (n != 16384) s.notes.push_back("opt8 parameters were tuned for n = 2^14");
      break;
    }
    case Variant::kOpt8Table: {
      const detail::Opt8Row* best = &detail::kOpt8Table[0];
      for (const auto& row : detail::kOpt8Table)
        if (std::fabs(row.q - p) < std::fabs(best->q - p)) best = &row;
      if (std::fabs(best->q - p) > 1e-9)
        s.notes.push_back("opt8-table: nearest tabulated QBER " + std::to_string(best->q) +
                          " used for p = " + std::to_string(p));
      s.block_sizes = {best->k1, best->k2, best->k3};
      fill_plateau(14);
      s.reuse_subblocks = true;
      if (n != 16384) s.notes.push_back("opt8 parameters were tuned for n = 2^14");
      break;
    }
    case Variant::kCustom:
      throw ConfigError("build_schedule: custom schedules are supplied as JSON documents");
  }

  if (s.block_sizes.front() > n)
    throw ConfigError("build_schedule: first block size " + std::to_string(s.block_sizes.front()) +
                      " exceeds frame length " + std::to_string(n) +
                      " (p too small for this frame)");
  clamp_sizes();
  s.validate(n);
  return s;
}

// --- JSON form (mirrors the struct fields) ---------------------------------

inline void to_json(nlohmann::json& j, const BlockSchedule& s) {
  j = nlohmann::json{
      {"name", s.name},
      {"block_sizes", s.block_sizes},
      {"reuse_subblocks", s.reuse_subblocks},
      {"shuffle_mode", s.shuffle_mode == ShuffleMode::kConstrainedRandom ? "constrained-random"
                                                                         : "random"},
      {"discard_singletons", s.discard_singletons},
  };
  if (s.biconf) j["biconf"] = {{"stop_streak", s.biconf->stop_streak}};
  if (!s.notes.empty()) j["notes"] = s.notes;
}

inline void from_json(const nlohmann::json& j, BlockSchedule& s) {
  s = BlockSchedule{};
  s.name = j.value("name", "custom");
  j.at("block_sizes").get_to(s.block_sizes);
  s.reuse_subblocks = j.value("reuse_subblocks", false);
  const std::string mode = j.value("shuffle_mode", "random");
  if (mode == "constrained-random")
    s.shuffle_mode = ShuffleMode::kConstrainedRandom;
  else if (mode == "random")
    s.shuffle_mode = ShuffleMode::kRandom;
  else
    throw ConfigError("schedule JSON: unknown shuffle_mode: " + mode);
  s.discard_singletons = j.value("discard_singletons", false);
  if (j.contains("biconf")) s.biconf = BiconfConfig{j["biconf"].value("stop_streak", 10u)};
  if (j.contains("notes")) j.at("notes").get_to(s.notes);
}

}  // namespace cascade
