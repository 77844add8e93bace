#include "vac/export.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace vac {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("export: cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void export_csv(const SimulationLog& log, const std::string& path) {
  if (log.rows.empty()) throw Error("export: nothing to export");
  std::ofstream out = open_out(path);
  out << "time,update_marker";
  for (const std::string& n : log.node_names) out << ",vrms_" << n;
  for (const std::string& d : log.dg_names)
    out << ",p_w_" << d << ",q_var_" << d << ",i_d_a_" << d << ",i_q_a_" << d << ",r_v_ohm_" << d
        << ",l_v_h_" << d;
  out << ",total_deviation,sat_flags\n";
  for (const LogRow& r : log.rows) {
    out << fmt(r.t) << ',' << r.update_marker;
    for (double v : r.vrms) out << ',' << fmt(v);
    for (const DgSample& s : r.dg)
      out << ',' << fmt(s.p) << ',' << fmt(s.q) << ',' << fmt(s.i_d) << ',' << fmt(s.i_q) << ','
          << fmt(s.r_v) << ',' << fmt(s.l_v);
    out << ',' << fmt(r.total_deviation) << ',' << r.sat_flags << '\n';
  }
  if (!out) throw Error("export: write failed for '" + path + "'");
}

void export_metrics(const SimulationLog& log, const std::string& path) {
  if (log.rows.empty()) throw Error("export: nothing to export");
  nlohmann::ordered_json j;
  j["rows"] = log.rows.size();
  j["mode"] = log.mode == SimMode::QuasiStatic ? "quasi_static" : "rms_dynamic";
  j["final_total_deviation"] = log.rows.back().total_deviation;
  nlohmann::ordered_json nodes;
  for (size_t i = 0; i < log.node_names.size(); ++i)
    nodes[log.node_names[i]] = log.rows.back().vrms[i];
  j["final_vrms"] = nodes;

  int to_stationary = -1;
  nlohmann::ordered_json ups = nlohmann::ordered_json::array();
  for (const SecondaryRecord& rec : log.updates) {
    nlohmann::ordered_json u;
    u["index"] = rec.index;
    u["t_measured"] = rec.t_measured;
    u["t_applied"] = rec.t_applied;
    u["objective"] = rec.update.objective_value;
    u["converged"] = rec.update.converged;
    u["max_gain_delta"] = rec.update.max_gain_delta;
    nlohmann::ordered_json gains;
    for (size_t dg = 0; dg < log.dg_names.size(); ++dg) {
      gains[log.dg_names[dg]] = {{"r_v_ohm", rec.update.gains[dg].r_v},
                                 {"l_v_h", rec.update.gains[dg].l_v}};
    }
    u["gains"] = gains;
    ups.push_back(u);
    if (to_stationary < 0 && rec.update.converged) to_stationary = rec.index + 1;
  }
  j["updates"] = ups;
  j["updates_to_stationary"] = to_stationary;

  size_t sat_samples = 0;
  for (const LogRow& r : log.rows)
    if (r.sat_flags != 0) ++sat_samples;
  j["saturated_samples"] = sat_samples;

  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("export: write failed for '" + path + "'");
}

void export_batch_csv(const BatchReport& report, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "run,seed,failed,any_saturation,gains_stationary,loads,gens,deviation_trajectory\n";
  for (const BatchRunResult& r : report.results) {
    out << r.run << ',' << r.seed << ',' << (r.failed ? 1 : 0) << ',' << (r.any_saturation ? 1 : 0)
        << ',' << (r.gains_stationary ? 1 : 0) << ',';
    for (size_t i = 0; i < r.load_p.size(); ++i) out << (i ? ";" : "") << fmt(r.load_p[i]);
    out << ',';
    for (size_t i = 0; i < r.gen_p.size(); ++i) out << (i ? ";" : "") << fmt(r.gen_p[i]);
    out << ',';
    for (size_t i = 0; i < r.deviation_at_updates.size(); ++i)
      out << (i ? ";" : "") << fmt(r.deviation_at_updates[i]);
    out << '\n';
  }
  if (!out) throw Error("export: write failed for '" + path + "'");
}

void export_sweep_csv(const SweepReport& report, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "a_value";
  for (const std::string& n : report.node_names) out << ",dev_v_" << n;
  for (const std::string& d : report.dg_names) out << ",i_v_a_" << d << ",saturated_" << d;
  out << ",total_deviation\n";
  for (const SweepPoint& p : report.points) {
    out << fmt(p.a_value);
    for (double v : p.node_deviation) out << ',' << fmt(v);
    for (size_t dg = 0; dg < p.virtual_current.size(); ++dg)
      out << ',' << fmt(p.virtual_current[dg]) << ',' << (p.dg_saturated[dg] ? 1 : 0);
    out << ',' << fmt(p.total_deviation) << '\n';
  }
  if (!out) throw Error("export: write failed for '" + path + "'");
}

}  // namespace vac
