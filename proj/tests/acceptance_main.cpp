// Acceptance battery for the two-level voltage control scheme. Each check
// prints one PASS/FAIL line; the process exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vac/export.hpp"
#include "vac/scenario.hpp"
#include "vac/secondary.hpp"
#include "vac/simulation.hpp"

using namespace vac;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

void info(const std::string& msg) { std::printf("       %s\n", msg.c_str()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Scenario reference_scenario() {
  return load_scenario(std::string(VAC_SCENARIO_DIR) + "/table2_table3.json");
}

struct Equilibrium {
  std::vector<double> vrms;     // line-to-line rms per node
  std::vector<DgSample> dg;
  double total_deviation = 0.0;
};

Equilibrium settle(Scenario s) {
  s.secondary.enabled = false;
  s.events.clear();
  s.sim.t_end = 2.0 * s.sim.dt;
  const SimulationLog log = run_simulation(s);
  Equilibrium eq;
  eq.vrms = log.rows.back().vrms;
  eq.dg = log.rows.back().dg;
  eq.total_deviation = log.rows.back().total_deviation;
  return eq;
}

// ---- criterion 1 -----------------------------------------------------------
void criterion_baseline() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario s = reference_scenario();
  for (auto& c : s.converters) c.vac_enabled = false;
  const Equilibrium eq = settle(s);
  const double rt = seconds_since(t0);
  const bool under2 = eq.vrms[1] < 400.0;
  const bool under3 = eq.vrms[2] < 400.0;
  const bool over4 = eq.vrms[3] > 400.0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "N2 %.1f V, N3 %.1f V, N4 %.1f V (nominal 400), runtime %.2f s", eq.vrms[1],
                eq.vrms[2], eq.vrms[3], rt);
  report(1, "baseline profile: undervoltage at N2/N3, overvoltage at N4",
         under2 && under3 && over4 && rt < 1.0, buf);
}

// ---- criterion 2 -----------------------------------------------------------
void criterion_primary_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario off = reference_scenario();
  for (auto& c : off.converters) c.vac_enabled = false;
  const Equilibrium base = settle(off);

  Scenario partial = off;
  partial.converters[0].vac_enabled = true;  // N2
  partial.converters[1].vac_enabled = true;  // N3
  const Equilibrium two = settle(partial);

  Scenario full = off;
  for (auto& c : full.converters) c.vac_enabled = true;
  const Equilibrium all = settle(full);
  const double rt = seconds_since(t0);

  bool reduces = true;
  for (int j : {1, 2, 3})
    reduces = reduces && (std::fabs(400.0 - all.vrms[j]) < std::fabs(400.0 - base.vrms[j]));
  const double n4_shift = std::fabs(two.vrms[3] - base.vrms[3]);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "deviation %.2f/%.2f/%.2f -> %.2f/%.2f/%.2f V; N4 shift with N2/N3 only "
                "%.3f V; runtime %.2f s",
                std::fabs(400.0 - base.vrms[1]), std::fabs(400.0 - base.vrms[2]),
                std::fabs(400.0 - base.vrms[3]), std::fabs(400.0 - all.vrms[1]),
                std::fabs(400.0 - all.vrms[2]), std::fabs(400.0 - all.vrms[3]), n4_shift, rt);
  report(2, "primary control reduces deviation at every converter node",
         reduces && n4_shift < 0.5 && rt < 5.0, buf);
}

// ---- criteria 3, 4, 5 ------------------------------------------------------
struct RecursionOutcome {
  SimulationLog log;
  bool ran = false;
};

RecursionOutcome run_recursion(double comm_delay) {
  Scenario s = reference_scenario();
  s.secondary.comm_delay = comm_delay;
  RecursionOutcome out;
  out.log = run_simulation(s);
  out.ran = true;
  return out;
}

std::vector<double> settled_deviation_trace(const SimulationLog& log, const Scenario& s) {
  std::vector<double> trace;
  for (const SecondaryRecord& rec : log.updates)
    trace.push_back(log.at_time(rec.t_measured - s.sim.dt).total_deviation);
  trace.push_back(log.rows.back().total_deviation);
  return trace;
}

bool non_increasing(const std::vector<double>& xs, double tol) {
  for (size_t k = 1; k < xs.size(); ++k)
    if (xs[k] > xs[k - 1] + tol) return false;
  return true;
}

void criteria_recursion(SimulationLog* main_log) {
  Scenario s = reference_scenario();
  const RecursionOutcome out = run_recursion(s.secondary.comm_delay);
  *main_log = out.log;
  const SimulationLog& log = out.log;

  bool pass = log.updates.size() >= 4;
  std::string detail;
  if (!pass) {
    detail = "fewer than 4 gain updates executed";
  } else {
    const bool stationary = log.updates[3].update.converged;
    const double last_delta = log.updates[3].update.max_gain_delta;
    const auto trace = settled_deviation_trace(log, s);
    const bool monotone = non_increasing(trace, 1e-6);
    pass = stationary && monotone;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "4th update max gain change %.2e (< 1e-4), deviation trace %.2f -> %.2f V^2 %s",
                  last_delta, trace.front(), trace.back(),
                  monotone ? "non-increasing" : "NOT monotone");
    detail = buf;
  }
  report(3, "recursion stationary within four updates, deviation non-increasing", pass, detail);

  // robustness against a slow channel: same checks with a 1 s delay
  const RecursionOutcome slow = run_recursion(1.0);
  if (slow.log.updates.size() >= 4) {
    const bool stationary = slow.log.updates[3].update.converged;
    Scenario sd = s;
    sd.secondary.comm_delay = 1.0;
    const bool monotone = non_increasing(settled_deviation_trace(slow.log, sd), 1e-6);
    info(std::string("comm-delay 1 s variant: ") +
         (stationary && monotone ? "stationary and monotone as well" : "DEGRADED"));
  }

  // criterion 4: converged power deviations
  {
    const LogRow& fin = log.rows.back();
    const double p1 = fin.dg[0].p, p2 = fin.dg[1].p, p3 = fin.dg[2].p, q3 = fin.dg[2].q;
    const bool ok1 = std::fabs(p1 - 10.6e3) <= 0.1 * 10.6e3;
    const bool ok2 = std::fabs(p2 - 13.2e3) <= 0.1 * 13.2e3;
    const bool ok3 = p3 < 15e3 && q3 < 0.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "DG1 %.2f kW (10.6 +-10%%), DG2 %.2f kW (13.2 +-10%%), DG3 %.2f kW / %.2f kvar",
                  p1 / 1e3, p2 / 1e3, p3 / 1e3, q3 / 1e3);
    report(4, "converged power deviations in the reference bands", ok1 && ok2 && ok3, buf);
  }

  // criterion 5: the third converter lands on the minimum-resistance boundary
  {
    const double r_min = s.bounds.r_v_min;
    int first_on_boundary = -1;
    double final_c1 = 1e9;
    for (size_t k = 0; k < log.updates.size(); ++k) {
      const Admittance2 y = log.updates[k].update.admittances[2];
      const double c1 = -y.g + r_min * (y.g * y.g + y.b * y.b);
      if (std::fabs(c1) < 1e-6 && first_on_boundary < 0) first_on_boundary = int(k) + 1;
      if (k + 1 == log.updates.size()) final_c1 = std::fabs(c1);
    }
    const bool pass5 = final_c1 < 1e-6 && first_on_boundary >= 2 && first_on_boundary <= 4;
    char buf[256];
    std::snprintf(buf, sizeof buf, "boundary first reached at update %d, final |c1| = %.2e",
                  first_on_boundary, final_c1);
    report(5, "DG3 virtual resistance pinned at its minimum", pass5, buf);
  }
}

// ---- criterion 6 -----------------------------------------------------------
void criterion_disturbance() {
  bool pass_all = true;
  std::string details;
  struct Case {
    const char* name;
    EventSpec ev;
  };
  EventSpec load;
  load.at = 9.0;
  load.kind = EventSpec::Kind::LoadStep;
  load.node = "N2";
  load.delta_p = 18e3;
  EventSpec swell;
  swell.at = 9.0;
  swell.kind = EventSpec::Kind::GridVoltageStep;
  swell.fraction = 0.07;
  for (const Case& c : {Case{"18 kW load step at N2", load}, Case{"7% grid swell", swell}}) {
    Scenario s = reference_scenario();
    s.events.push_back(c.ev);
    const SimulationLog log = run_simulation(s);
    const double post = log.at_time(10.95).total_deviation;          // settled after the hit
    const double after_two = log.rows.back().total_deviation;        // two more updates later
    const bool ok = after_two < post;
    pass_all = pass_all && ok;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: %.2f -> %.2f V^2; ", c.name, post, after_two);
    details += buf;
  }
  report(6, "post-disturbance updates recover the voltage profile", pass_all, details);
}

// ---- criterion 7 -----------------------------------------------------------
void criterion_weight_sweeps() {
  Scenario s = reference_scenario();

  const SweepReport uni = run_weight_sweep(s, SweepKind::Uniform);
  bool monotone_dev = true;
  for (size_t k = 1; k < uni.points.size(); ++k)
    if (uni.points[k].total_deviation <
        uni.points[k - 1].total_deviation - std::max(1e-9, 1e-6 * uni.points[k - 1].total_deviation))
      monotone_dev = false;
  // virtual current non-increasing (as a falls) for converters that never saturate
  bool iv_ok = true;
  for (size_t dg = 0; dg < uni.dg_names.size(); ++dg) {
    bool saturated = false;
    for (const SweepPoint& p : uni.points) saturated = saturated || p.dg_saturated[dg];
    if (saturated) continue;
    for (size_t k = 1; k < uni.points.size(); ++k)
      if (uni.points[k].virtual_current[dg] > uni.points[k - 1].virtual_current[dg] + 1e-3)
        iv_ok = false;
  }

  const SweepReport single = run_weight_sweep(s, SweepKind::Single);
  const double n2_ref = single.points.front().node_deviation[1];
  const double n3_ref = single.points.front().node_deviation[2];
  double n2_span = 0.0, n3_span = 0.0;
  for (const SweepPoint& p : single.points) {
    n2_span = std::max(n2_span, std::fabs(p.node_deviation[1] - n2_ref));
    n3_span = std::max(n3_span, std::fabs(p.node_deviation[2] - n3_ref));
  }
  const double n4_first = single.points.front().node_deviation[3];
  const double n4_last = single.points.back().node_deviation[3];
  const bool n4_responds = n4_last > n4_first * 1.10;
  // "unaffected" is measured against the nominal voltage: the de-weighted
  // converter's current swing leaks into the other feeder through the common
  // grid tie, so a sub-volt drift is inherent to this network
  const double v_nom = s.base.v_d_nom();
  const bool others_still = n2_span < 0.02 * v_nom && n3_span < 0.02 * v_nom;

  char buf[320];
  std::snprintf(buf, sizeof buf,
                "uniform: deviation %s, unsaturated i_v %s; single: N2/N3 span %.2f/%.2f V "
                "(%.2f%%/%.2f%% of nominal; %.0f%%/%.0f%% of own value), N4 %.2f -> %.2f V",
                monotone_dev ? "monotone" : "NOT monotone", iv_ok ? "monotone" : "NOT monotone",
                n2_span, n3_span, 100.0 * n2_span / v_nom, 100.0 * n3_span / v_nom,
                100.0 * n2_span / n2_ref, 100.0 * n3_span / n3_ref, n4_first, n4_last);
  report(7, "weight sweeps: trade-off direction and locality",
         monotone_dev && iv_ok && n4_responds && others_still, buf);
}

// ---- criterion 8 -----------------------------------------------------------
void criterion_stochastic() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario s = reference_scenario();
  s.secondary.first_at = 2.0;
  s.secondary.period = 3.0;
  s.sim.t_end = 2.0 + 3.0 * 5 + 1.0;
  const BatchReport rep = run_stochastic_batch(s, 30, 0.0, 50e3, 0.0, 15e3, 42);
  const double rt = seconds_since(t0);
  // Unsaturated runs must be strictly non-increasing. Runs pinned at the
  // converter ratings may show one bounded supervisory probe-and-rollback
  // bump but must end flat, never above where they started.
  int failures = 0, violations = 0, saturated_runs = 0;
  for (const BatchRunResult& r : rep.results) {
    if (r.failed) {
      ++failures;
      continue;
    }
    const auto& traj = r.deviation_at_updates;
    if (traj.empty()) continue;
    bool ok = true;
    if (r.any_saturation) {
      ++saturated_runs;
      for (size_t k = 1; k < traj.size(); ++k)
        if (traj[k] > traj[k - 1] * 1.10 + 1e-6) ok = false;
      if (traj.back() > traj.front() * (1.0 + 1e-3) + 1e-6) ok = false;
    } else {
      for (size_t k = 1; k < traj.size(); ++k)
        if (traj[k] > traj[k - 1] * (1.0 + 1e-3) + 1e-6) ok = false;
    }
    if (!ok) ++violations;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "30 runs: %d solver failures, %d trajectory violations (%d runs saturated), "
                "runtime %.1f s",
                failures, violations, saturated_runs, rt);
  report(8, "stochastic robustness across random loading and generation",
         failures == 0 && violations == 0 && rt < 120.0, buf);
}

// ---- criterion 9 -----------------------------------------------------------
void criterion_oracle() {
  Scenario sc = reference_scenario();
  const double v_nom = sc.base.v_d_nom();
  int checked = 0;
  double worst_gap = 0.0;
  bool pass = true;

  for (int trial = 0; trial < 10 && pass && checked < 24; ++trial) {
    Rng rng(1000u + trial);
    Scenario s = sc;
    for (auto& l : s.loads) {
      const double p = rng.uniform(0.0, 50e3);
      l.load = LoadSpec::constant_current({2.0 * p / (3.0 * v_nom), 0.0});
    }
    for (auto& c : s.converters) {
      c.setpoints.p_ref = rng.uniform(0.0, 15e3);
      c.initial_gains = {rng.uniform(0.05, 0.5), rng.uniform(5e-4, 5e-3)};
    }
    s.secondary.enabled = false;
    s.sim.t_end = 2.0 * s.sim.dt;
    NetworkModel net = s.build_network();

    // settle and snapshot through the library path
    auto inject = [&](int dg, const DqVec& v) {
      const double ang = std::atan2(v.q, v.d);
      const double mag = std::max(v.magnitude(), 0.1 * v_nom);
      auto [i_loc, fl] = steady_state_injection(s.converters[dg].initial_gains,
                                                s.converters[dg].setpoints,
                                                s.converters[dg].params, {mag, 0.0},
                                                s.base.omega_n(), true);
      (void)fl;
      return rotate(i_loc, FrameAngle{ang});
    };
    NetworkSolution sol = quasi_static_solve(net, inject);
    MeasurementSnapshot snap;
    snap.timestamp = 0.0;
    for (int j = 0; j < net.node_count(); ++j) {
      const DqVec v = sol.v[j];
      const double ang = std::atan2(v.q, v.d);
      snap.delta.push_back(ang);
      snap.v_hat.push_back({v.magnitude(), 0.0});
      snap.i_load.push_back(net.load(j)
                                ? rotate(load_current(*net.load(j), v, 0.1 * v_nom),
                                         FrameAngle{-ang})
                                : DqVec{});
    }
    for (const auto& c : s.converters) {
      snap.setpoints.push_back(c.setpoints);
      snap.gains_now.push_back(c.initial_gains);
      snap.vac_active.push_back(true);
    }

    for (int dg = 0; dg < net.dg_count(); ++dg) {
      const SubproblemSpec spec =
          build_subproblem(net, snap, dg, 1.0, 0.0, s.bounds,
                           s.converters[dg].params.i_max, 0.1 * v_nom);
      const SubproblemResult solved = solve_subproblem(spec);
      SubproblemResult oracle;
      try {
        oracle = brute_force_oracle(spec);
      } catch (const Error&) {
        continue;  // admissible set below the oracle grid resolution
      }
      const double ref = std::max(std::fabs(oracle.objective), 1e-9 * v_nom * v_nom);
      // signed: the solver may resolve boundary-pinched optima below the
      // lattice resolution, but must never fall short of the enumeration
      const double gap = (solved.objective - oracle.objective) / ref;
      worst_gap = std::max(worst_gap, gap);
      pass = pass && solved.feasible && gap < 1e-3;
      ++checked;
    }
  }

  char buf[128];
  std::snprintf(buf, sizeof buf, "%d randomized subproblems, worst relative gap %.2e", checked,
                worst_gap);
  report(9, "gain solver agrees with the exhaustive oracle", pass && checked >= 20, buf);
}

// ---- criterion 10 ----------------------------------------------------------
void criterion_physics(const SimulationLog& main_log) {
  Scenario s = reference_scenario();
  const double i_max = s.converters[0].params.i_max;

  // every logged sample respects the rating and the no-absorption rule
  bool rating_ok = true;
  for (const LogRow& row : main_log.rows)
    for (const DgSample& d : row.dg) {
      if (std::hypot(d.i_d, d.i_q) > i_max * (1.0 + 1e-9)) rating_ok = false;
      if (d.i_d < -1e-12) rating_ok = false;
    }

  // KCL residual at a converged solve
  NetworkModel net = s.build_network();
  const double v_nom = s.base.v_d_nom();
  auto inject = [&](int dg, const DqVec& v) {
    const double ang = std::atan2(v.q, v.d);
    const double mag = std::max(v.magnitude(), 0.1 * v_nom);
    auto [i_loc, fl] =
        steady_state_injection(s.converters[dg].initial_gains, s.converters[dg].setpoints,
                               s.converters[dg].params, {mag, 0.0}, s.base.omega_n(), true);
    (void)fl;
    return rotate(i_loc, FrameAngle{ang});
  };
  const NetworkSolution sol = quasi_static_solve(net, inject);
  double worst_res = 0.0;
  for (double r : kcl_residual(net, sol, inject)) worst_res = std::max(worst_res, r);

  // dynamic virtual-admittance fixed point equals the quasi-stationary form
  const RLParams gains{0.2255, 0.0032};
  const DqVec v_s{v_nom - 15.0, 4.0};
  const DqVec v_ref{v_nom, 0.0};
  DqVec i{};
  for (int k = 0; k < 4000; ++k)
    i = vac_dynamic_step(i, gains, v_s, v_ref, s.base.omega_n(), 1e-3);
  const DqVec i_ss = vac_quasi_static(rl_to_admittance(gains, s.base.omega_n()), v_s, v_ref);
  const double vac_err = std::hypot(i.d - i_ss.d, i.q - i_ss.q) / i_ss.magnitude();

  // rotation and admittance round trips
  double worst_round = 0.0;
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const DqVec v{rng.uniform(-400, 400), rng.uniform(-400, 400)};
    const double ang = rng.uniform(-3, 3);
    const DqVec back = rotate(rotate(v, FrameAngle{ang}), FrameAngle{-ang});
    worst_round = std::max(worst_round,
                           std::hypot(back.d - v.d, back.q - v.q) / std::max(1.0, v.magnitude()));
    const RLParams rl{rng.uniform(0.01, 5.0), rng.uniform(1e-5, 0.05)};
    const RLParams rt = admittance_to_rl(rl_to_admittance(rl, s.base.omega_n()), s.base.omega_n());
    worst_round = std::max(worst_round, std::fabs(rt.r - rl.r) / rl.r);
    worst_round = std::max(worst_round, std::fabs(rt.l - rl.l) / rl.l);
  }

  const bool pass = rating_ok && worst_res < 1e-9 && vac_err < 1e-6 && worst_round < 1e-10;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "ratings %s; KCL residual %.1e pu; dynamic/quasi-static gap %.1e; round trips %.1e",
                rating_ok ? "respected" : "VIOLATED", worst_res, vac_err, worst_round);
  report(10, "physics invariants", pass, buf);
}

}  // namespace

int main() {
  std::printf("acceptance battery: two-level virtual-admittance voltage control\n");
  try {
    criterion_baseline();
    criterion_primary_direction();
    SimulationLog main_log;
    criteria_recursion(&main_log);
    criterion_disturbance();
    criterion_weight_sweeps();
    criterion_stochastic();
    criterion_oracle();
    criterion_physics(main_log);
  } catch (const std::exception& e) {
    std::printf("[FAIL] battery aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d failure(s)\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
