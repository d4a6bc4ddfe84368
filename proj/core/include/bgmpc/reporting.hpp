#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bgmpc/harness.hpp"

namespace bgmpc {

// Per-category run costs in thousands of dollars.
struct CostBreakdown {
  double freq_cost = 0.0;        // sum x'Qx, Eq.-weighted
  double regulation_cost = 0.0;  // sum du'R du
  double lopf_cost = 0.0;        // sum J(u_bar) over dispatch blocks
  double hvac_cost = 0.0;        // sum c_b'u_b
  double total_grid = 0.0;       // freq + regulation + lopf
  double total = 0.0;            // total_grid + hvac
};

// Recomputed from the recorded closed-loop trajectories (independent of the
// counters the harness accumulates while running).
CostBreakdown cost_breakdown(const ScenarioRun& run, const CostConfig& costs);

// (x - y) / x; throws std::invalid_argument for x <= 0.
double percent_reduction(double x, double y);

// Writes costs.csv, trajectories.csv, summary.json and the per-time
// min/mean/max envelope files (plot_frequency.csv, plot_temperature.csv,
// plot_hvac.csv, plot_generation.csv) under outdir.
void emit(const ScenarioRun& run, const CostBreakdown& breakdown,
          const std::filesystem::path& outdir);

// Side-by-side cost table for several scenario runs (one costs.csv column
// group per scenario), written to outdir/comparison.csv.
void emit_comparison(const std::vector<std::pair<std::string, CostBreakdown>>& rows,
                     const std::filesystem::path& outdir);

}  // namespace bgmpc
