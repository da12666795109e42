#pragma once

// Figures of merit: entropy, reconciliation efficiencies, leakage, frame and
// bit error rates, and mergeable ensemble aggregation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <json.hpp>

#include "cascade/protocol.hpp"

namespace cascade {

// Binary Shannon entropy in bits/symbol, h(0) = h(1) = 0 by continuity.
inline double binary_entropy(double e) {
  if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("binary_entropy: e must be in [0, 1]");
  if (e == 0.0 || e == 1.0) return 0.0;
  return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

// Disclosed information relative to the Shannon limit: m / (n h(e)).
// 1 is perfect; e = 0 yields the +inf sentinel.
inline double f_ec(double m, uint64_t n, double e) {
  if (n < 1) throw std::invalid_argument("f_ec: n must be >= 1");
  if (!(e >= 0.0 && e < 0.5 + 1e-12)) throw std::invalid_argument("f_ec: e must be in [0, 0.5]");
  const double h = binary_entropy(e);
  if (h == 0.0) return std::numeric_limits<double>::infinity();
  return m / (static_cast<double>(n) * h);
}

// Fraction of channel capacity achieved: R / (1 - h(e)) with R = 1 - m/n.
inline double beta(double m, uint64_t n, double e) {
  if (n < 1) throw std::invalid_argument("beta: n must be >= 1");
  const double h = binary_entropy(e);
  const double denom = 1.0 - h;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return (1.0 - m / static_cast<double>(n)) / denom;
}

// Leakage ratio with the frame-error penalty: a failed frame counts as fully
// disclosed.
inline double leak_ec(double fer, double m, uint64_t n) {
  if (!(fer >= 0.0 && fer <= 1.0)) throw std::invalid_argument("leak_ec: fer must be in [0, 1]");
  return (1.0 - fer) * (m / static_cast<double>(n)) + fer;
}

// FER-penalised efficiency: leak / h(e); +inf sentinel when e = 0.
inline double eta_ec(double leak, double e) {
  const double h = binary_entropy(e);
  if (h == 0.0) return std::numeric_limits<double>::infinity();
  return leak / h;
}

// One-sided Clopper-Pearson bounds on a binomial proportion.
inline double binomial_upper_bound(uint64_t failures, uint64_t trials, double confidence = 0.95) {
  if (trials == 0) throw std::invalid_argument("binomial_upper_bound: no trials");
  using boost::math::binomial_distribution;
  return binomial_distribution<double>::find_upper_bound_on_p(
      static_cast<double>(trials), static_cast<double>(failures), 1.0 - confidence);
}

inline double binomial_lower_bound(uint64_t failures, uint64_t trials, double confidence = 0.95) {
  if (trials == 0) throw std::invalid_argument("binomial_lower_bound: no trials");
  using boost::math::binomial_distribution;
  return binomial_distribution<double>::find_lower_bound_on_p(
      static_cast<double>(trials), static_cast<double>(failures), 1.0 - confidence);
}

// Ensemble metrics for one (schedule, n, p, q) grid point.
struct RunReport {
  std::string variant;
  uint64_t n = 0;
  double p_init = 0.0;
  double q_true = 0.0;
  uint64_t frames = 0;
  double mean_m = 0.0;
  double mean_rounds = 0.0;
  double sem_m = 0.0;
  double sem_rounds = 0.0;
  double fer = 0.0;
  double fer_ci_high = 0.0;  // 95% Clopper-Pearson upper bound
  double ber = 0.0;
  double f_ec = 0.0;
  double beta = 0.0;
  double leak_ec = 0.0;
  double eta_ec = 0.0;
  uint64_t failures = 0;
  uint64_t seed = 0;

  static std::string csv_header() {
    return "variant,n,p_init,q,frames,mean_m,mean_rounds,fer,fer_ci_high,ber,f_ec,beta,leak_ec,"
           "eta_ec";
  }

  std::string csv_row() const;
};

// Order-independent partial aggregate; integer accumulators keep merged
// results bit-identical no matter how frames are partitioned over workers.
struct PartialAgg {
  uint64_t frames = 0;
  uint64_t failures = 0;
  uint64_t sum_m = 0;
  uint64_t sum_rounds = 0;
  uint64_t sum_residual = 0;
  __uint128_t sum_m2 = 0;
  __uint128_t sum_rounds2 = 0;

  void add(uint64_t m, uint64_t rounds, uint64_t residual_errors) {
    ++frames;
    if (residual_errors > 0) ++failures;
    sum_m += m;
    sum_rounds += rounds;
    sum_residual += residual_errors;
    sum_m2 += static_cast<__uint128_t>(m) * m;
    sum_rounds2 += static_cast<__uint128_t>(rounds) * rounds;
  }

  void add(const ReconcileOutcome& o) { add(o.m, o.rounds, o.residual_errors); }

  void merge(const PartialAgg& other) {
    frames += other.frames;
    failures += other.failures;
    sum_m += other.sum_m;
    sum_rounds += other.sum_rounds;
    sum_residual += other.sum_residual;
    sum_m2 += other.sum_m2;
    sum_rounds2 += other.sum_rounds2;
  }

  RunReport finalize(double q_true, double p_init, uint64_t n,
                     const std::string& variant = "custom", uint64_t seed = 0) const {
    if (frames == 0) throw std::invalid_argument("aggregate: empty outcome collection");
    RunReport r;
    r.variant = variant;
    r.n = n;
    r.p_init = p_init;
    r.q_true = q_true;
    r.frames = frames;
    r.failures = failures;
    r.seed = seed;
    const auto nf = static_cast<double>(frames);
    r.mean_m = static_cast<double>(sum_m) / nf;
    r.mean_rounds = static_cast<double>(sum_rounds) / nf;
    r.sem_m = sem(sum_m, sum_m2);
    r.sem_rounds = sem(sum_rounds, sum_rounds2);
    r.fer = static_cast<double>(failures) / nf;
    r.fer_ci_high = binomial_upper_bound(failures, frames);
    r.ber = static_cast<double>(sum_residual) / (static_cast<double>(n) * nf);
    r.f_ec = cascade::f_ec(r.mean_m, n, q_true);
    r.beta = cascade::beta(r.mean_m, n, q_true);
    r.leak_ec = cascade::leak_ec(r.fer, r.mean_m, n);
    r.eta_ec = cascade::eta_ec(r.leak_ec, q_true);
    return r;
  }

 private:
  double sem(uint64_t sum, __uint128_t sum2) const {
    if (frames < 2) return 0.0;
    const auto nf = static_cast<long double>(frames);
    const long double mean = static_cast<long double>(sum) / nf;
    const long double var =
        (static_cast<long double>(sum2) - nf * mean * mean) / (nf - 1.0L);
    return var > 0.0L ? static_cast<double>(std::sqrt(var / nf)) : 0.0;
  }
};

// Aggregate a materialized collection (uniform n assumed per precondition).
inline RunReport aggregate(const std::vector<ReconcileOutcome>& outcomes, double q_true,
                           double p_init, const std::string& variant = "custom",
                           uint64_t seed = 0) {
  if (outcomes.empty()) throw std::invalid_argument("aggregate: empty outcome collection");
  const uint64_t n = outcomes.front().corrected_frame.size();
  PartialAgg agg;
  for (const auto& o : outcomes) {
    if (o.corrected_frame.size() != n)
      throw std::invalid_argument("aggregate: frame lengths are not uniform");
    agg.add(o);
  }
  return agg.finalize(q_true, p_init, n, variant, seed);
}

namespace detail {
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace detail

inline std::string RunReport::csv_row() const {
  using detail::num;
  std::string s;
  s += variant;
  s += ',' + std::to_string(n);
  s += ',' + num(p_init);
  s += ',' + num(q_true);
  s += ',' + std::to_string(frames);
  s += ',' + num(mean_m);
  s += ',' + num(mean_rounds);
  s += ',' + num(fer);
  s += ',' + num(fer_ci_high);
  s += ',' + num(ber);
  s += ',' + num(f_ec);
  s += ',' + num(beta);
  s += ',' + num(leak_ec);
  s += ',' + num(eta_ec);
  return s;
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = nlohmann::json{{"variant", r.variant},
                     {"n", r.n},
                     {"p_init", r.p_init},
                     {"q", r.q_true},
                     {"frames", r.frames},
                     {"failures", r.failures},
                     {"mean_m", r.mean_m},
                     {"sem_m", r.sem_m},
                     {"mean_rounds", r.mean_rounds},
                     {"sem_rounds", r.sem_rounds},
                     {"fer", r.fer},
                     {"fer_ci_high", r.fer_ci_high},
                     {"ber", r.ber},
                     {"f_ec", r.f_ec},
                     {"beta", r.beta},
                     {"leak_ec", r.leak_ec},
                     {"eta_ec", r.eta_ec},
                     {"seed", r.seed},
                     {"generator", kGeneratorId},
                     {"version", kVersion}};
}

}  // namespace cascade
