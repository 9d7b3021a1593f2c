#pragma once

#include "pim/grid.hpp"
#include "pim/media.hpp"

namespace pim::qpsolver {

using media::DeltaQpGrid;

struct SolverConfig {
  double span = 20.0;   // QP units between importance 0 and 255
  double clamp = 10.0;  // |ΔQP| bound
  double tolerance = 1e-6;
  double search_lo = -40.0;
  double search_hi = 40.0;
  int max_iterations = 200;

  void validate() const;
};

struct SolveReport {
  double offset = 0.0;         // solved c*
  double real_ratio = 1.0;     // estimated bitrate ratio of the unrounded map
  double rounded_ratio = 1.0;  // same, after rounding to integers
  int iterations = 0;
};

struct SolveResult {
  DeltaQpGrid dqp;
  SolveReport report;
};

/// Bitrate multiplier of a macroblock relative to ΔQP = 0: 2^(-dqp/3).
double rate_weight(double dqp);

/// Unrounded ΔQP for one importance value at offset c.
double delta_qp(double importance, double offset, const SolverConfig& cfg);

/// Mean rate weight of the unrounded map at offset c.
double mean_rate_weight(const MacroblockGrid<double>& importance, double offset,
                        const SolverConfig& cfg);

/// Finds the offset that makes the map bitrate-neutral, then rounds per cell.
SolveResult solve_dqp(const MacroblockGrid<double>& importance, const SolverConfig& cfg = {});

/// Mean of rate_weight over the grid.
double estimate_ratio(const DeltaQpGrid& grid);

}  // namespace pim::qpsolver
