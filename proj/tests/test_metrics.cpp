#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cascade/metrics.hpp"

using namespace cascade;

TEST_CASE("binary entropy") {
  CHECK(binary_entropy(0.5) == 1.0);
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.02) == Catch::Approx(0.141441).margin(1e-6));
  CHECK_THROWS_AS(binary_entropy(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(binary_entropy(1.1), std::invalid_argument);
}

TEST_CASE("f_ec") {
  const double h = binary_entropy(0.03);
  CHECK(f_ec(10000 * h, 10000, 0.03) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(f_ec(10000, 10000, 0.03) == Catch::Approx(1.0 / h).epsilon(1e-12));
  CHECK(std::isinf(f_ec(100, 1000, 0.0)));
}

TEST_CASE("beta and the efficiency identity") {
  const double h = binary_entropy(0.04);
  CHECK(beta(10000 * h, 10000, 0.04) == Catch::Approx(1.0).epsilon(1e-12));

  Prng g(5);
  for (int rep = 0; rep < 500; ++rep) {
    const uint64_t n = 100 + g.bounded(100000);
    const double e = 0.001 + 0.4 * g.unit();
    const double m = g.unit() * n;
    const double f = f_ec(m, n, e);
    const double b = beta(m, n, e);
    const double h_e = binary_entropy(e);
    // 1 - f h = beta (1 - h)
    CHECK(std::fabs((1.0 - f * h_e) - b * (1.0 - h_e)) < 1e-12);
  }
}

TEST_CASE("leakage ratio") {
  CHECK(leak_ec(0.0, 1000, 10000) == Catch::Approx(0.1));
  CHECK(leak_ec(1.0, 1000, 10000) == Catch::Approx(1.0));
  CHECK(leak_ec(1e-3, 1000, 10000) == Catch::Approx(0.1009));
  CHECK_THROWS_AS(leak_ec(-0.1, 1, 10), std::invalid_argument);
  // monotone in fer for fixed m/n < 1
  double prev = -1;
  for (double fer = 0; fer <= 1.0; fer += 0.05) {
    const double l = leak_ec(fer, 2000, 10000);
    CHECK(l >= prev);
    prev = l;
  }
}

TEST_CASE("eta_ec") {
  const double h = binary_entropy(0.02);
  CHECK(eta_ec(h, 0.02) == Catch::Approx(1.0));
  CHECK(std::isinf(eta_ec(0.1, 0.0)));
  // fer = 0 collapses eta to f
  const double m = 1500;
  CHECK(eta_ec(leak_ec(0.0, m, 10000), 0.02) ==
        Catch::Approx(f_ec(m, 10000, 0.02)).epsilon(1e-12));
}

TEST_CASE("aggregate basics") {
  std::vector<ReconcileOutcome> outcomes;
  CHECK_THROWS_AS(aggregate(outcomes, 0.02, 0.02), std::invalid_argument);

  for (int i = 0; i < 10; ++i) {
    ReconcileOutcome o;
    o.corrected_frame = Frame(1000);
    o.m = 141;
    o.rounds = 10;
    o.residual_errors = 0;
    o.success = true;
    outcomes.push_back(o);
  }
  auto r = aggregate(outcomes, 0.02, 0.02, "test");
  CHECK(r.fer == 0.0);
  CHECK(r.fer_ci_high > 0.0);
  CHECK(r.mean_m == Catch::Approx(141.0));
  CHECK(r.sem_m == 0.0);
  CHECK(r.f_ec == Catch::Approx(f_ec(141.0, 1000, 0.02)));

  // counting failures
  PartialAgg agg;
  for (uint64_t i = 0; i < 10000; ++i) agg.add(100, 5, i < 3 ? 2 : 0);
  auto rr = agg.finalize(0.02, 0.02, 1000);
  CHECK(rr.fer == Catch::Approx(3e-4));
  CHECK(rr.ber == Catch::Approx(6.0 / (1000.0 * 10000.0)));
}

TEST_CASE("aggregation is mergeable") {
  Prng g(6);
  for (int rep = 0; rep < 20; ++rep) {
    PartialAgg whole, part1, part2;
    const int total = 50 + int(g.bounded(200));
    const int cut = int(g.bounded(uint64_t(total)));
    for (int i = 0; i < total; ++i) {
      const uint64_t m = 100 + g.bounded(500);
      const uint64_t rounds = 4 + g.bounded(40);
      const uint64_t residual = g.bounded(10) == 0 ? g.bounded(8) : 0;
      whole.add(m, rounds, residual);
      (i < cut ? part1 : part2).add(m, rounds, residual);
    }
    part1.merge(part2);
    auto a = whole.finalize(0.03, 0.03, 1000);
    auto b = part1.finalize(0.03, 0.03, 1000);
    CHECK(a.mean_m == b.mean_m);
    CHECK(a.sem_m == b.sem_m);
    CHECK(a.fer == b.fer);
    CHECK(a.ber == b.ber);
    CHECK(a.mean_rounds == b.mean_rounds);
    CHECK(a.csv_row() == b.csv_row());
  }
}

TEST_CASE("binomial confidence bounds") {
  // Rule of three: zero failures in N trials gives roughly 3/N.
  CHECK(binomial_upper_bound(0, 1000) == Catch::Approx(3.0 / 1000).epsilon(0.05));
  CHECK(binomial_lower_bound(0, 1000) == 0.0);
  CHECK(binomial_upper_bound(10, 1000) > 10.0 / 1000);
  CHECK(binomial_lower_bound(10, 1000) < 10.0 / 1000);
}

TEST_CASE("csv rows use explicit sentinels") {
  PartialAgg agg;
  agg.add(100, 5, 0);
  auto r = agg.finalize(0.0, 0.01, 1000);  // q = 0: efficiency is +inf
  const auto row = r.csv_row();
  CHECK(row.find("inf") != std::string::npos);
  CHECK(row.find("nan") == std::string::npos);
}
