#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "vac/export.hpp"
#include "vac/scenario.hpp"
#include "vac/secondary.hpp"
#include "vac/simulation.hpp"

namespace {

std::string out_path(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / name).string();
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const std::string& mode_override) {
  vac::Scenario s = vac::load_scenario(scenario_path);
  if (mode_override == "quasi_static")
    s.sim.mode = vac::SimMode::QuasiStatic;
  else if (mode_override == "rms_dynamic")
    s.sim.mode = vac::SimMode::RmsDynamic;
  else if (!mode_override.empty())
    throw vac::Error("unknown --mode '" + mode_override + "'");

  vac::SimulationLog log = vac::run_simulation(s);
  const std::string csv = out_path(out_dir, s.name + ".csv");
  const std::string metrics = out_path(out_dir, s.name + "_metrics.json");
  vac::export_csv(log, csv);
  vac::export_metrics(log, metrics);
  std::printf("simulated %s: %zu rows, %zu gain updates, final deviation %.6g V^2\n",
              s.name.c_str(), log.rows.size(), log.updates.size(),
              log.rows.back().total_deviation);
  std::printf("wrote %s and %s\n", csv.c_str(), metrics.c_str());
  return 0;
}

int cmd_batch(const std::string& scenario_path, int runs, std::uint64_t seed,
              const std::string& out_dir, double load_max, double gen_max) {
  vac::Scenario s = vac::load_scenario(scenario_path);
  vac::BatchReport report = vac::run_stochastic_batch(s, runs, 0.0, load_max, 0.0, gen_max, seed);
  const std::string csv = out_path(out_dir, s.name + "_batch.csv");
  vac::export_batch_csv(report, csv);
  int failures = 0;
  for (const auto& r : report.results) failures += r.failed ? 1 : 0;
  std::printf("batch of %d runs (seed %llu): %d failures; wrote %s\n", runs,
              static_cast<unsigned long long>(seed), failures, csv.c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& scenario_path, const std::string& kind,
              const std::string& out_dir) {
  vac::Scenario s = vac::load_scenario(scenario_path);
  vac::SweepKind k;
  if (kind == "uniform")
    k = vac::SweepKind::Uniform;
  else if (kind == "single")
    k = vac::SweepKind::Single;
  else
    throw vac::Error("unknown --kind '" + kind + "' (expected uniform|single)");
  vac::SweepReport report = vac::run_weight_sweep(s, k);
  const std::string csv = out_path(out_dir, s.name + "_sweep_" + kind + ".csv");
  vac::export_sweep_csv(report, csv);
  std::printf("sweep (%s) over %zu points; wrote %s\n", kind.c_str(), report.points.size(),
              csv.c_str());
  return 0;
}

int cmd_validate(const std::string& scenario_path) {
  try {
    vac::Scenario s = vac::load_scenario(scenario_path);
    std::printf("%s: valid (%zu nodes, %zu converters, %zu events)\n", s.name.c_str(),
                s.nodes.size(), s.converters.size(), s.events.size());
    return 0;
  } catch (const vac::Error& e) {
    std::printf("invalid: %s\n", e.what());
    return 1;
  }
}

int cmd_oracle(const std::string& scenario_path, const std::string& dg_id) {
  vac::Scenario s = vac::load_scenario(scenario_path);
  vac::NetworkModel net = s.build_network();
  const double v_nom = s.base.v_d_nom();

  // Operating-point snapshot from the settled initial-gain equilibrium.
  vac::MeasurementSnapshot snap;
  {
    vac::SolveOptions opt;
    auto inject = [&](int dg, const vac::DqVec& v) {
      const double ang = std::atan2(v.q, v.d);
      const vac::DqVec v_loc{std::max(v.magnitude(), 0.1 * v_nom), 0.0};
      auto [i_loc, flags] = vac::steady_state_injection(
          s.converters[dg].initial_gains, s.converters[dg].setpoints, s.converters[dg].params,
          v_loc, s.base.omega_n(), s.converters[dg].vac_enabled);
      (void)flags;
      return vac::rotate(i_loc, vac::FrameAngle{ang});
    };
    vac::NetworkSolution sol = vac::quasi_static_solve(net, inject, opt);
    snap.timestamp = 0.0;
    for (int j = 0; j < net.node_count(); ++j) {
      const vac::DqVec v = sol.v[j];
      const double ang = std::atan2(v.q, v.d);
      snap.delta.push_back(ang);
      snap.v_hat.push_back({v.magnitude(), 0.0});
      snap.i_load.push_back(
          net.load(j) ? vac::rotate(vac::load_current(*net.load(j), v, 0.1 * v_nom),
                                    vac::FrameAngle{-ang})
                      : vac::DqVec{});
    }
    for (const auto& c : s.converters) {
      snap.setpoints.push_back(c.setpoints);
      snap.gains_now.push_back(c.initial_gains);
      snap.vac_active.push_back(c.vac_enabled);
    }
  }

  const int dg = net.dg_index(dg_id);
  const int node = net.dg_node(dg);
  vac::SubproblemSpec spec =
      vac::build_subproblem(net, snap, dg, s.weights.a[node], s.weights.b[dg], s.bounds,
                            s.converters[dg].params.i_max, 0.1 * v_nom);
  vac::SubproblemResult solved = vac::solve_subproblem(spec);
  vac::SubproblemResult oracle = vac::brute_force_oracle(spec);
  const double ref = std::max(std::fabs(oracle.objective), 1e-9);
  std::printf("converter %s at node %s\n", dg_id.c_str(), net.node_name(node).c_str());
  std::printf("  solver: objective %.9g at (g=%.6g, b=%.6g) -> r_v=%.6g ohm, l_v=%.6g H\n",
              solved.objective, solved.g, solved.b, solved.gains.r_v, solved.gains.l_v);
  std::printf("  oracle: objective %.9g at (g=%.6g, b=%.6g)\n", oracle.objective, oracle.g,
              oracle.b);
  std::printf("  relative gap: %.3g\n", (solved.objective - oracle.objective) / ref);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual-admittance voltage control simulator"};
  app.require_subcommand(1);

  std::string scenario, out_dir = "out", mode, kind = "uniform", dg_id;
  int runs = 30;
  std::uint64_t seed = 1;
  double load_max = 50e3, gen_max = 15e3;

  auto* sim = app.add_subcommand("simulate", "run a scenario and export CSV + metrics");
  sim->add_option("scenario", scenario, "scenario file")->required();
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--mode", mode, "override simulation mode (quasi_static|rms_dynamic)");

  auto* batch = app.add_subcommand("batch", "stochastic load/generation batch");
  batch->add_option("scenario", scenario, "scenario file")->required();
  batch->add_option("--runs", runs, "number of runs");
  batch->add_option("--seed", seed, "batch seed");
  batch->add_option("--out", out_dir, "output directory");
  batch->add_option("--load-max", load_max, "upper load draw bound (W)");
  batch->add_option("--gen-max", gen_max, "upper generation draw bound (W)");

  auto* sweep = app.add_subcommand("sweep", "objective weight sweep");
  sweep->add_option("scenario", scenario, "scenario file")->required();
  sweep->add_option("--kind", kind, "uniform|single");
  sweep->add_option("--out", out_dir, "output directory");

  auto* validate = app.add_subcommand("validate", "parse and validate a scenario");
  validate->add_option("scenario", scenario, "scenario file")->required();

  auto* oracle = app.add_subcommand("oracle", "compare the gain solver against brute force");
  oracle->add_option("scenario", scenario, "scenario file")->required();
  oracle->add_option("--dg", dg_id, "converter id")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(scenario, out_dir, mode);
    if (batch->parsed()) return cmd_batch(scenario, runs, seed, out_dir, load_max, gen_max);
    if (sweep->parsed()) return cmd_sweep(scenario, kind, out_dir);
    if (validate->parsed()) return cmd_validate(scenario);
    if (oracle->parsed()) return cmd_oracle(scenario, dg_id);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
