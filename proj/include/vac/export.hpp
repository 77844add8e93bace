#pragma once

#include <string>

#include "vac/simulation.hpp"

namespace vac {

// Time-series CSV with a fixed column order:
//   time, update_marker, vrms per node, [p, q, i_d, i_q, r_v, l_v] per
//   converter, total_deviation, sat_flags.
// Deterministic formatting; re-exporting the same log is byte-identical.
void export_csv(const SimulationLog& log, const std::string& path);

// Run metrics as JSON: final deviation, update history, gain-update count to
// stationarity, saturation sample count.
void export_metrics(const SimulationLog& log, const std::string& path);

void export_batch_csv(const BatchReport& report, const std::string& path);
void export_sweep_csv(const SweepReport& report, const std::string& path);

}  // namespace vac
