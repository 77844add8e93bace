#pragma once

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "vac/converter.hpp"
#include "vac/network.hpp"

namespace vac {

// Everything the gain scheduler consumes, frozen at one instant. Per-node
// quantities are expressed in each node's local synchronisation frame, with
// delta mapping them back to the common frame.
struct MeasurementSnapshot {
  double timestamp = 0.0;
  std::vector<DqVec> v_hat;          // per node, local frame, filtered
  std::vector<double> delta;         // per node, local -> common angle (rad)
  std::vector<DqVec> i_load;         // per node, local frame
  std::vector<Setpoints> setpoints;  // per converter
  std::vector<VacGains> gains_now;   // per converter, last commanded gains
  std::vector<bool> vac_active;      // per converter
};

void validate_snapshot(const NetworkModel& net, const MeasurementSnapshot& snap);

// Node weights a_j and converter weights b_i of the regulation objective.
struct WeightConfig {
  std::vector<double> a;  // per node, in (0, 1]
  std::vector<double> b;  // per converter, in [0, 1)
};

// Checks the tuning rule a_j + b_i = 1 per converter and the interval bounds;
// returns one message per violation (empty means valid).
std::vector<std::string> validate_weights(const WeightConfig& w, const NetworkModel& net);

struct GainBounds {
  double r_v_min = 0.0;  // ohm; 0 degenerates the quadratic constraint to g > 0
  double l_v_min = 0.0;  // henry
};

// Frozen constants of one converter's 2-variable subproblem, common frame.
struct SubproblemSpec {
  std::complex<double> y_sum;   // sum of line admittances at the node (+ grid tie)
  std::complex<double> rhs0;    // i_pq - i_load + sum Y_ij v_hat_i
  std::complex<double> v_star;  // voltage reference rotated to the common frame
  std::complex<double> i_pq;    // frozen setpoint current, common frame
  double a_j = 1.0;
  double b_i = 0.0;
  double i_max = 0.0;        // A
  double v_nom = 0.0;        // V, target magnitude
  double omega_n = 0.0;      // rad/s
  double measured_dev = 0.0; // V, v_nom - measured node magnitude
  GainBounds bounds;
};

SubproblemSpec build_subproblem(const NetworkModel& net, const MeasurementSnapshot& snap,
                                int dg, double a_j, double b_i, const GainBounds& bounds,
                                double i_max, double v_floor);

// Node voltage predicted for virtual admittance (g, b), with neighbour
// voltages and setpoint currents frozen at their measured values:
//   (sum Y + Y_v) v_j = i_pq - i_load + Y_v v_star + sum Y_ij v_hat_i.
DqVec predicted_node_voltage(double g, double b, const SubproblemSpec& s);

// Convenience overload assembling the frozen constants on the fly.
DqVec predicted_node_voltage(double g, double b, int node, const MeasurementSnapshot& snap,
                             const NetworkModel& net, double v_floor);

// Virtual current at the predicted voltage: i_v = Y_v (v_star - v_j).
DqVec predicted_virtual_current(double g, double b, const SubproblemSpec& s);

// One converter's share of the objective: a_j (v_nom - |v_j|)^2 + b_i |i_v|^2.
double objective_term(double g, double b, const SubproblemSpec& s);

// Stability constraint residuals; feasible iff both are negative:
//   c1 = -g + r_v_min (g^2 + b^2),  c2 = b + omega_n l_v_min (g^2 + b^2).
struct StabilityResiduals {
  double c1 = 0.0;
  double c2 = 0.0;
};
StabilityResiduals stability_constraint_residuals(double g, double b, const GainBounds& bounds,
                                                  double omega_n);

// Rating constraint residual |i_c|^2 - i_max^2 at the predicted voltage.
double current_constraint_residual(double g, double b, const SubproblemSpec& s);

struct SubproblemResult {
  double g = 0.0;
  double b = 0.0;
  VacGains gains{};   // canonical form of (g, b)
  bool zero_admittance = false;
  bool unchanged = false;  // continuation kept the warm point bit-exactly
  double objective = 0.0;
  bool feasible = false;
  bool c1_active = false;
  bool c2_active = false;
  bool c3_active = false;
  std::string diagnostic;
};

struct SolveTuning {
  int grid_n = 50;
  int nm_restarts = 2;
  int nm_max_evals = 4000;
  double box_cap_factor = 64.0;  // admittance box when a bound is zero
  std::vector<std::pair<double, double>> extra_candidates;  // (g, b) seeds
  // Continuation mode: refine locally from this point instead of re-seeding
  // globally. The recursive scheduler uses it so that consecutive updates
  // track one basin; the objective is near-flat along long valleys and a
  // global re-seed would make the emitted gains slide arbitrarily far under
  // measurement noise.
  bool warm_start = false;
  double warm_g = 0.0;
  double warm_b = 0.0;
  // Linear proximal weight: a move of length y_ref must improve the pure
  // objective by this fraction of its current value to be worth taking.
  double proximal_weight = 0.10;
  // Emit the warm point unchanged when the achievable relative improvement
  // falls below this; the recursion then repeats its gains exactly.
  double freeze_tol = 0.12;
};

// Minimises the objective term over (g, b) subject to the stability and
// rating constraints: feasible-grid seeding, Nelder-Mead refinement with
// infeasible-point rejection, then exact polishing along the active
// constraint circles. When even the zero-admittance point violates the
// rating constraint the result carries zero gains and a diagnostic.
SubproblemResult solve_subproblem(const SubproblemSpec& s, const SolveTuning& tuning = {});

struct OracleGrid {
  int n_g = 400;
  int n_b = 400;
  int refine_levels = 4;
  int refine_points = 61;
};

// Independent verification: exhaustive evaluation over a dense inclusive
// (g, b) grid, keeping the best feasible point, with nested zoom levels.
SubproblemResult brute_force_oracle(const SubproblemSpec& s, const OracleGrid& grid = {});

struct GainUpdate {
  std::vector<VacGains> gains;           // per converter
  std::vector<Admittance2> admittances;  // optimisation-plane view of the same
  std::vector<bool> zero_admittance;
  std::vector<std::string> diagnostics;  // empty string when clean
  std::vector<double> objective_terms;   // per converter
  std::vector<double> per_node_terms;    // a_j (v_nom - |v_j|)^2 per node
  double objective_value = 0.0;
  bool converged = false;                // max gain change below eps_fix
  double max_gain_delta = 0.0;
};

struct IterationOptions {
  double eps_fix = 1e-4;
  double v_floor = 0.0;  // absolute volts; 0 selects 0.1 pu of v_nom
  SolveTuning tuning;
};

// Solves every converter's subproblem independently against the same frozen
// snapshot and recomputes the full objective with the new gains. Subproblem
// failures are carried per converter; the remaining converters still update.
GainUpdate secondary_iteration(const NetworkModel& net, const MeasurementSnapshot& snap,
                               const WeightConfig& w, const GainBounds& bounds,
                               const std::vector<double>& i_max_per_dg,
                               const IterationOptions& opt = {});

// Full objective for an arbitrary set of gains on a frozen snapshot. Non-DG
// nodes contribute their measured deviation as constants.
double objective_value(const NetworkModel& net, const MeasurementSnapshot& snap,
                       const WeightConfig& w, const GainBounds& bounds,
                       const std::vector<Admittance2>& gains, double v_floor = 0.0);

// Canonical-form conversion used for emitted gains; near-zero admittances map
// to a practically open virtual branch (r_v = 1e9, l_v = 0).
VacGains gains_from_admittance(double g, double b, double omega_n, bool* zero_admittance);

}  // namespace vac
