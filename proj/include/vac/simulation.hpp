#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vac/scenario.hpp"

namespace vac {

struct DgSample {
  double p = 0.0;    // W delivered
  double q = 0.0;    // var delivered
  double i_d = 0.0;  // A, local frame
  double i_q = 0.0;  // A, local frame
  double r_v = 0.0;  // ohm, ramped gain
  double l_v = 0.0;  // henry, ramped gain
};

struct LogRow {
  double t = 0.0;
  int update_marker = 0;  // 1 on the step where new gains are applied
  std::vector<double> vrms;  // per node, line-to-line rms
  std::vector<DgSample> dg;
  double total_deviation = 0.0;  // sum_j a_j (v_nom - |v_j|)^2, peak-phase volts^2
  unsigned sat_flags = 0;        // bit per converter
};

struct SecondaryRecord {
  int index = 0;
  double t_measured = 0.0;
  double t_applied = 0.0;
  GainUpdate update;
};

struct SimulationLog {
  std::vector<std::string> node_names;
  std::vector<std::string> dg_names;
  SimMode mode = SimMode::QuasiStatic;
  double dt = 0.0;
  std::vector<LogRow> rows;
  std::vector<SecondaryRecord> updates;

  const LogRow& at_time(double t) const;  // last row with row.t <= t + 1e-12
};

SimulationLog run_simulation(const Scenario& s);

struct BatchRunResult {
  int run = 0;
  std::uint64_t seed = 0;
  std::vector<double> load_p;             // drawn, W, per scenario load entry
  std::vector<double> gen_p;              // drawn, W, per converter
  std::vector<double> deviation_at_updates;  // settled before each measurement + final
  bool failed = false;
  std::string diagnostic;
  bool any_saturation = false;
  bool gains_stationary = false;
};

struct BatchReport {
  std::uint64_t seed = 0;
  int runs = 0;
  std::vector<BatchRunResult> results;
};

// Repeats the scenario with loads ~ U[load range] and generation setpoints
// ~ U[gen range], seeded and reproducible. Individual run failures are
// recorded and the batch continues.
BatchReport run_stochastic_batch(const Scenario& s, int runs, double load_lo, double load_hi,
                                 double gen_lo, double gen_hi, std::uint64_t seed);

enum class SweepKind { Uniform, Single };

struct SweepPoint {
  double a_value = 0.0;                 // swept weight value
  std::vector<double> node_deviation;   // |v_nom - |v_j||, peak-phase volts
  std::vector<double> virtual_current;  // |i_v| per converter, A
  std::vector<bool> dg_saturated;       // over the settled window
  double total_deviation = 0.0;
};

struct SweepReport {
  SweepKind kind = SweepKind::Uniform;
  std::vector<SweepPoint> points;
  std::vector<std::string> node_names;
  std::vector<std::string> dg_names;
};

// Steady-state results after two gain updates per sweep point.
// Uniform: a_j = v for all nodes, b_i = 1 - v, v = 0.9 .. 0.1.
// Single: a at the last converter's node = v (its b complementary), others 1/0.
SweepReport run_weight_sweep(const Scenario& s, SweepKind kind);

// Deterministic uniform generator (splitmix64 core) so that reports are
// bit-identical across platforms for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  double uniform(double lo, double hi);

 private:
  std::uint64_t state_;
};

}  // namespace vac
