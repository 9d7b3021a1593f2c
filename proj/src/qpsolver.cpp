#include "pim/qpsolver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pim/gridmap.hpp"

namespace pim::qpsolver {

void SolverConfig::validate() const {
  if (!(span > 0.0)) throw ConfigError("span must be positive");
  if (!(clamp > 0.0 && clamp <= media::kMaxAbsDeltaQp)) throw ConfigError("clamp must be in (0, 10]");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (!(search_lo < search_hi)) throw ConfigError("empty offset search interval");
  if (max_iterations <= 0) throw ConfigError("max_iterations must be positive");
}

double rate_weight(double dqp) { return std::exp2(-dqp / 3.0); }

double delta_qp(double importance, double offset, const SolverConfig& cfg) {
  return std::clamp(offset + cfg.span * (0.5 - importance / 255.0), -cfg.clamp, cfg.clamp);
}

double mean_rate_weight(const MacroblockGrid<double>& importance, double offset,
                        const SolverConfig& cfg) {
  double sum = 0.0;
  for (double v : importance) sum += rate_weight(delta_qp(v, offset, cfg));
  return sum / static_cast<double>(importance.size());
}

SolveResult solve_dqp(const MacroblockGrid<double>& importance, const SolverConfig& cfg) {
  cfg.validate();
  if (importance.empty()) throw DimensionError("importance grid is empty");
  for (double v : importance) {
    if (std::isnan(v)) throw RangeError("NaN in importance grid");
    if (v < 0.0 || v > 255.0) throw RangeError("importance value outside [0, 255]");
  }

  // The residual is continuous and non-increasing in the offset.
  auto residual = [&](double c) { return mean_rate_weight(importance, c, cfg) - 1.0; };
  double lo = cfg.search_lo, hi = cfg.search_hi;
  double f_lo = residual(lo), f_hi = residual(hi);
  if (f_lo < 0.0 || f_hi > 0.0) {
    throw SolverError("no sign change of the neutrality residual over [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  }

  SolveReport report;
  double c = lo, f = f_lo;
  if (std::abs(f_hi) < std::abs(f_lo)) {
    c = hi;
    f = f_hi;
  }
  while (std::abs(f) > cfg.tolerance && report.iterations < cfg.max_iterations) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = residual(mid);
    ++report.iterations;
    c = mid;
    f = f_mid;
    if (f_mid > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (std::abs(f) > cfg.tolerance) throw SolverError("bisection did not converge");

  SolveResult result{DeltaQpGrid(importance.rows(), importance.cols()), report};
  for (std::size_t i = 0; i < importance.size(); ++i) {
    result.dqp.cells()[i] =
        static_cast<int>(gridmap::round_half_away(delta_qp(importance.cells()[i], c, cfg)));
  }
  result.report.offset = c;
  result.report.real_ratio = f + 1.0;
  result.report.rounded_ratio = estimate_ratio(result.dqp);
  return result;
}

double estimate_ratio(const DeltaQpGrid& grid) {
  if (grid.empty()) throw DimensionError("ΔQP grid is empty");
  double sum = 0.0;
  for (int v : grid) sum += rate_weight(v);
  return sum / static_cast<double>(grid.size());
}

}  // namespace pim::qpsolver
