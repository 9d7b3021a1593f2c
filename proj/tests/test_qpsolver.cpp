#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "pim/error.hpp"
#include "pim/qpsolver.hpp"

using namespace pim;
using namespace pim::qpsolver;

namespace {

MacroblockGrid<double> random_grid(std::mt19937_64& rng, int rows = 29, int cols = 50) {
  MacroblockGrid<double> g(rows, cols);
  std::uniform_real_distribution<double> d(0.0, 255.0);
  for (auto& v : g) v = d(rng);
  return g;
}

std::vector<double> values(const MacroblockGrid<double>& g) { return {g.begin(), g.end()}; }

}  // namespace

TEST_CASE("rate_weight") {
  CHECK(rate_weight(0) == 1.0);
  CHECK(rate_weight(-3) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(rate_weight(6) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("uniform grids solve to exactly zero ΔQP") {
  for (double v : {0.0, 17.0, 127.5, 128.0, 200.0, 255.0}) {
    const auto r = solve_dqp(MacroblockGrid<double>(29, 50, v));
    for (int d : r.dqp) CHECK(d == 0);
    CHECK(r.report.offset == doctest::Approx(20.0 * (v / 255.0 - 0.5)).epsilon(1e-6));
    CHECK(r.report.rounded_ratio == 1.0);
  }
}

TEST_CASE("two-level worked instance") {
  MacroblockGrid<double> g(29, 50, 0.0);
  for (std::size_t i = 0; i < g.size(); i += 2) g.cells()[i] = 255.0;  // 725 of 1450
  const auto r = solve_dqp(g);
  CHECK(std::abs(r.report.offset - 7.2203) < 1e-3);
  CHECK(std::abs(r.report.offset - oracle::scan_offset(values(g))) < 1e-3);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(r.dqp.cells()[i] == (i % 2 == 0 ? -3 : 10));
  CHECK(r.report.rounded_ratio == doctest::Approx(0.5 * std::exp2(-10.0 / 3) + 0.5 * 2.0).epsilon(1e-12));
  CHECK(std::abs(r.report.rounded_ratio - 1.0496) < 1e-4);
  CHECK(std::abs(r.report.real_ratio - 1.0) <= 1e-6);
}

TEST_CASE("ten-percent grid matches the scan oracle") {
  MacroblockGrid<double> g(29, 50, 0.0);
  for (std::size_t i = 0; i < 145; ++i) g.cells()[i * 10] = 255.0;
  const auto r = solve_dqp(g);
  CHECK(std::abs(r.report.offset - oracle::scan_offset(values(g))) < 1e-3);
  CHECK(std::abs(r.report.real_ratio - 1.0) <= 1e-6);
}

TEST_CASE("estimate_ratio") {
  CHECK(estimate_ratio(DeltaQpGrid(29, 50, 0)) == 1.0);
  CHECK(estimate_ratio(DeltaQpGrid(29, 50, -3)) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("errors") {
  MacroblockGrid<double> g(2, 2, 10.0);
  g(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_dqp(g), RangeError);
  SolverConfig narrow;
  narrow.search_lo = 0.0;
  narrow.search_hi = 1.0;
  CHECK_THROWS_AS(solve_dqp(MacroblockGrid<double>(2, 2, 0.0), narrow), SolverError);
  SolverConfig bad;
  bad.clamp = 11;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.span = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(solve_dqp(MacroblockGrid<double>()), DimensionError);
}

TEST_CASE("property: ΔQP is non-increasing in importance") {
  SolverConfig cfg;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> c(-30, 30), v(0, 255);
  for (int t = 0; t < 500; ++t) {
    const double off = c(rng), a = v(rng), b = v(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(delta_qp(hi, off, cfg) <= delta_qp(lo, off, cfg));
  }
}

TEST_CASE("property: random grids match the scan oracle and stay near neutral") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 25; ++t) {
    const auto g = random_grid(rng);
    const auto r = solve_dqp(g);
    CHECK(std::abs(r.report.real_ratio - 1.0) <= 1e-6);
    CHECK(std::abs(r.report.rounded_ratio - 1.0) <= 0.06);
    CHECK(std::abs(r.report.offset - oracle::scan_offset(values(g))) <= 1e-3);
    for (int d : r.dqp) CHECK(std::abs(d) <= 10);
  }
}
