#include "vac/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vac {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& ctx, const std::string& msg) {
  throw Error(ctx + ": " + msg);
}

double num(const json& j, const std::string& ctx, const std::string& key) {
  if (!j.contains(key)) fail(ctx, "missing field '" + key + "'");
  if (!j[key].is_number()) fail(ctx, "field '" + key + "' must be a number");
  return j[key].get<double>();
}

double num_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

std::string str(const json& j, const std::string& ctx, const std::string& key) {
  if (!j.contains(key)) fail(ctx, "missing field '" + key + "'");
  if (!j[key].is_string()) fail(ctx, "field '" + key + "' must be a string");
  return j[key].get<std::string>();
}

// Quantities carry their unit in the key suffix; exactly one variant must be
// present. Factors convert to SI.
struct UnitKey {
  const char* suffix;
  double factor;
};

double quantity(const json& j, const std::string& ctx, const std::string& base,
                std::initializer_list<UnitKey> units, std::optional<double> fallback = {}) {
  const json* found = nullptr;
  double factor = 1.0;
  std::string found_key;
  for (const UnitKey& u : units) {
    const std::string key = base + "_" + u.suffix;
    if (j.contains(key)) {
      if (found) fail(ctx, "both '" + found_key + "' and '" + key + "' given for '" + base + "'");
      found = &j[key];
      factor = u.factor;
      found_key = key;
    }
  }
  if (!found) {
    if (fallback) return *fallback;
    fail(ctx, "missing quantity '" + base + "' (expected a unit-suffixed key)");
  }
  if (!found->is_number()) fail(ctx, "field '" + found_key + "' must be a number");
  return found->get<double>() * factor;
}

RLParams rl_quantity(const json& j, const std::string& ctx) {
  RLParams rl;
  rl.r = quantity(j, ctx, "r", {{"ohm", 1.0}, {"mohm", 1e-3}});
  rl.l = quantity(j, ctx, "l", {{"h", 1.0}, {"mh", 1e-3}, {"uh", 1e-6}});
  return rl;
}

}  // namespace

NetworkModel Scenario::build_network() const {
  std::vector<Line> net_lines;
  auto index_of = [&](const NodeId& id) -> int {
    for (size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == id) return static_cast<int>(i);
    throw Error("scenario: unknown node '" + id + "'");
  };
  const double w = base.omega_n();
  net_lines.reserve(lines.size());
  for (const LineSpec& l : lines)
    net_lines.push_back({index_of(l.from), index_of(l.to), rl_to_admittance(l.rl, w)});

  GridSource src;
  src.node = index_of(grid.node);
  src.v = DqVec{grid.v_pu * base.v_d_nom(), 0.0};
  src.y_g = rl_to_admittance(grid.tie, w);

  NetworkModel net(base, nodes, std::move(net_lines), src);
  for (const LoadSpecNamed& l : loads) net.set_load(index_of(l.node), l.load);
  for (const ConverterSpec& c : converters) net.attach_dg(index_of(c.node), c.id);
  net.validate();
  return net;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(origin, std::string("not valid JSON: ") + e.what());
  }

  Scenario s;
  s.name = j.contains("name") ? j["name"].get<std::string>() : origin;

  {
    const std::string ctx = origin + ".base";
    if (!j.contains("base")) fail(origin, "missing 'base'");
    const json& b = j["base"];
    s.base = PerUnitBase(quantity(b, ctx, "s", {{"va", 1.0}, {"kva", 1e3}}),
                         quantity(b, ctx, "v", {{"v", 1.0}, {"kv", 1e3}}),
                         num(b, ctx, "f_hz"));
  }
  const double z_base = s.base.z_base();
  const double l_base = s.base.l_base();

  {
    const std::string ctx = origin + ".network";
    if (!j.contains("network")) fail(origin, "missing 'network'");
    const json& n = j["network"];
    if (!n.contains("nodes") || !n["nodes"].is_array() || n["nodes"].empty())
      fail(ctx, "'nodes' must be a non-empty array");
    for (const auto& nd : n["nodes"]) s.nodes.push_back(nd.get<std::string>());

    if (!n.contains("grid_source")) fail(ctx, "missing 'grid_source'");
    const json& g = n["grid_source"];
    s.grid.node = str(g, ctx + ".grid_source", "node");
    s.grid.tie = rl_quantity(g, ctx + ".grid_source");
    s.grid.v_pu = num_or(g, "v_pu", 1.0);

    if (!n.contains("lines") || !n["lines"].is_array()) fail(ctx, "'lines' must be an array");
    for (const auto& l : n["lines"]) {
      Scenario::LineSpec ls;
      ls.from = str(l, ctx + ".lines", "from");
      ls.to = str(l, ctx + ".lines", "to");
      ls.rl = rl_quantity(l, ctx + ".lines");
      s.lines.push_back(ls);
    }
    if (n.contains("loads")) {
      for (const auto& l : n["loads"]) {
        const std::string lctx = ctx + ".loads";
        LoadSpecNamed ln;
        ln.node = str(l, lctx, "node");
        const std::string kind = l.contains("kind") ? l["kind"].get<std::string>()
                                                    : std::string("constant_power");
        if (kind == "constant_power") {
          ln.load = LoadSpec::constant_power(
              quantity(l, lctx, "p", {{"w", 1.0}, {"kw", 1e3}}),
              quantity(l, lctx, "q", {{"var", 1.0}, {"kvar", 1e3}}, 0.0));
        } else if (kind == "constant_current") {
          ln.load = LoadSpec::constant_current(
              {quantity(l, lctx, "i_d", {{"a", 1.0}}), quantity(l, lctx, "i_q", {{"a", 1.0}}, 0.0)});
        } else {
          fail(lctx, "unknown load kind '" + kind + "'");
        }
        s.loads.push_back(ln);
      }
    }
  }

  if (!j.contains("converters") || !j["converters"].is_array())
    fail(origin, "'converters' must be an array");
  for (const auto& c : j["converters"]) {
    const std::string ctx = origin + ".converters";
    ConverterSpec cs;
    cs.id = str(c, ctx, "id");
    cs.node = str(c, ctx, "node");

    ConverterParams& p = cs.params;
    p.s_n = quantity(c, ctx, "rating", {{"va", 1.0}, {"kva", 1e3}});
    p.u_dc = quantity(c, ctx, "u_dc", {{"v", 1.0}}, 680.0);
    if (c.contains("lcl")) {
      const json& f = c["lcl"];
      p.lcl.l_f1 = quantity(f, ctx + ".lcl", "l_f1", {{"h", 1.0}, {"mh", 1e-3}});
      p.lcl.l_f2 = quantity(f, ctx + ".lcl", "l_f2", {{"h", 1.0}, {"mh", 1e-3}});
      p.lcl.r_f1 = quantity(f, ctx + ".lcl", "r_f1", {{"ohm", 1.0}, {"mohm", 1e-3}});
      p.lcl.r_f2 = quantity(f, ctx + ".lcl", "r_f2", {{"ohm", 1.0}, {"mohm", 1e-3}});
      p.lcl.c_f = quantity(f, ctx + ".lcl", "c_f", {{"f", 1.0}, {"uf", 1e-6}});
    }
    if (c.contains("current_pi")) {
      p.pi_current.k_p = num(c["current_pi"], ctx + ".current_pi", "k_p");
      p.pi_current.k_i = num(c["current_pi"], ctx + ".current_pi", "k_i");
    }
    if (c.contains("pll")) {
      p.pll.k_p = num(c["pll"], ctx + ".pll", "k_p");
      p.pll.k_i = num(c["pll"], ctx + ".pll", "k_i");
    }
    p.t_f1 = num_or(c, "t_f1_s", 0.1);
    p.t_f2 = num_or(c, "t_f2_s", 0.1);
    p.i_max = quantity(c, ctx, "i_max", {{"a", 1.0}},
                       ConverterParams::rated_peak_current(p.s_n, s.base.v_d_nom()));
    p.p_max = quantity(c, ctx, "p_max", {{"w", 1.0}, {"kw", 1e3}}, p.s_n);
    p.v_floor = 0.1 * s.base.v_d_nom();
    const std::string dmode =
        c.contains("d_limit_mode") ? c["d_limit_mode"].get<std::string>() : "dc_bus";
    if (dmode == "dc_bus")
      p.d_limit_mode = DLimitMode::DcBus;
    else if (dmode == "power_at_voltage")
      p.d_limit_mode = DLimitMode::PowerAtVoltage;
    else
      fail(ctx, "unknown d_limit_mode '" + dmode + "'");
    if (c.contains("slew")) {
      const json& sl = c["slew"];
      p.slew.enabled = sl.contains("enabled") && sl["enabled"].get<bool>();
      p.slew.i_per_s = num_or(sl, "i_a_per_s", 14.14);
      p.slew.p_per_s = quantity(sl, ctx + ".slew", "p", {{"w_per_s", 1.0}, {"kw_per_s", 1e3}}, 50e3);
    }

    if (!c.contains("setpoints")) fail(ctx, "converter '" + cs.id + "' missing 'setpoints'");
    cs.setpoints.p_ref = quantity(c["setpoints"], ctx + ".setpoints", "p", {{"w", 1.0}, {"kw", 1e3}});
    cs.setpoints.q_ref =
        quantity(c["setpoints"], ctx + ".setpoints", "q", {{"var", 1.0}, {"kvar", 1e3}}, 0.0);
    cs.setpoints.v_ref = {s.base.v_d_nom(), 0.0};

    if (!c.contains("vac")) fail(ctx, "converter '" + cs.id + "' missing 'vac'");
    const json& v = c["vac"];
    cs.vac_enabled = !v.contains("enabled") || v["enabled"].get<bool>();
    const std::string form = v.contains("mode") ? v["mode"].get<std::string>() : "quasi_static";
    if (form == "quasi_static")
      cs.vac_form = VacForm::QuasiStatic;
    else if (form == "dynamic")
      cs.vac_form = VacForm::Dynamic;
    else
      fail(ctx + ".vac", "unknown mode '" + form + "'");
    cs.initial_gains.r_v = quantity(v, ctx + ".vac", "r_v",
                                    {{"ohm", 1.0}, {"mohm", 1e-3}, {"pu", z_base}});
    cs.initial_gains.l_v =
        quantity(v, ctx + ".vac", "l_v", {{"h", 1.0}, {"mh", 1e-3}, {"uh", 1e-6}, {"pu", l_base}});

    if (c.contains("droop")) {
      const json& dr = c["droop"];
      DroopConfig dc;
      const std::string kind = str(dr, ctx + ".droop", "kind");
      if (kind == "qv")
        dc.kind = DroopConfig::Kind::QV;
      else if (kind == "pv_qv")
        dc.kind = DroopConfig::Kind::PV_QV;
      else
        fail(ctx + ".droop", "unknown kind '" + kind + "'");
      dc.k_p = quantity(dr, ctx + ".droop", "k_p", {{"w_per_v", 1.0}, {"kw_per_v", 1e3}}, 0.0);
      dc.k_q = quantity(dr, ctx + ".droop", "k_q", {{"var_per_v", 1.0}, {"kvar_per_v", 1e3}}, 0.0);
      dc.deadband = num_or(dr, "deadband_v", 0.0);
      dc.v_nom = s.base.v_d_nom();
      cs.droop = dc;
    }
    s.converters.push_back(cs);
  }

  {
    const std::string ctx = origin + ".weights";
    if (!j.contains("weights")) fail(origin, "missing 'weights'");
    const json& w = j["weights"];
    if (!w.contains("a") || !w.contains("b")) fail(ctx, "needs 'a' (per node) and 'b' (per converter)");
    for (const NodeId& n : s.nodes) {
      if (!w["a"].contains(n)) fail(ctx, "missing weight a for node '" + n + "'");
      s.weights.a.push_back(w["a"][n].get<double>());
    }
    for (const ConverterSpec& c : s.converters) {
      if (!w["b"].contains(c.id)) fail(ctx, "missing weight b for converter '" + c.id + "'");
      s.weights.b.push_back(w["b"][c.id].get<double>());
    }
  }

  if (j.contains("bounds")) {
    const std::string ctx = origin + ".bounds";
    s.bounds.r_v_min = quantity(j["bounds"], ctx, "r_v_min",
                                {{"ohm", 1.0}, {"mohm", 1e-3}, {"pu", z_base}}, 0.0);
    s.bounds.l_v_min = quantity(j["bounds"], ctx, "l_v_min",
                                {{"h", 1.0}, {"mh", 1e-3}, {"uh", 1e-6}, {"pu", l_base}}, 0.0);
  }

  if (j.contains("secondary")) {
    const json& sec = j["secondary"];
    s.secondary.enabled = sec.contains("enabled") && sec["enabled"].get<bool>();
    s.secondary.period = num_or(sec, "period_s", 4.0);
    s.secondary.first_at = num_or(sec, "first_at_s", 3.0);
    s.secondary.comm_delay = num_or(sec, "comm_delay_s", 0.1);
  }

  if (j.contains("events")) {
    const std::string ctx = origin + ".events";
    for (const auto& e : j["events"]) {
      EventSpec ev;
      ev.at = num(e, ctx, "at_s");
      const std::string kind = str(e, ctx, "kind");
      if (kind == "load_step") {
        ev.kind = EventSpec::Kind::LoadStep;
        ev.node = str(e, ctx, "node");
        ev.delta_p = quantity(e, ctx, "delta_p", {{"w", 1.0}, {"kw", 1e3}});
      } else if (kind == "grid_voltage_step") {
        ev.kind = EventSpec::Kind::GridVoltageStep;
        ev.fraction = num(e, ctx, "fraction");
      } else if (kind == "enable_vac") {
        ev.kind = EventSpec::Kind::EnableVac;
        ev.converter = str(e, ctx, "converter");
      } else if (kind == "set_setpoint") {
        ev.kind = EventSpec::Kind::SetSetpoint;
        ev.converter = str(e, ctx, "converter");
        ev.p_ref = quantity(e, ctx, "p", {{"w", 1.0}, {"kw", 1e3}});
        ev.q_ref = quantity(e, ctx, "q", {{"var", 1.0}, {"kvar", 1e3}}, 0.0);
      } else if (kind == "set_weights") {
        ev.kind = EventSpec::Kind::SetWeights;
        for (const NodeId& n : s.nodes) ev.weights.a.push_back(num(e["a"], ctx, n));
        for (const ConverterSpec& c : s.converters)
          ev.weights.b.push_back(num(e["b"], ctx, c.id));
      } else {
        fail(ctx, "unknown event kind '" + kind + "'");
      }
      s.events.push_back(ev);
    }
  }

  if (j.contains("sim")) {
    const json& sm = j["sim"];
    s.sim.dt = num_or(sm, "dt_s", 0.05);
    s.sim.t_end = num_or(sm, "t_end_s", 20.0);
    const std::string mode = sm.contains("mode") ? sm["mode"].get<std::string>() : "quasi_static";
    if (mode == "quasi_static")
      s.sim.mode = SimMode::QuasiStatic;
    else if (mode == "rms_dynamic")
      s.sim.mode = SimMode::RmsDynamic;
    else
      fail(origin + ".sim", "unknown mode '" + mode + "'");
  }
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();

  const auto problems = validate_scenario(s);
  if (!problems.empty()) fail(origin, problems.front());
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_scenario: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  if (!(s.sim.dt > 0.0)) out.push_back("sim.dt must be strictly positive");
  if (!(s.sim.t_end > 0.0)) out.push_back("sim.t_end must be strictly positive");
  if (s.secondary.enabled && !(s.secondary.period > 0.0))
    out.push_back("secondary.period must be strictly positive when enabled");
  if (s.secondary.enabled && s.secondary.first_at < 0.0)
    out.push_back("secondary.first_at must be >= 0");
  if (s.secondary.comm_delay < 0.0) out.push_back("secondary.comm_delay must be >= 0");
  for (size_t i = 1; i < s.events.size(); ++i)
    if (s.events[i].at < s.events[i - 1].at) {
      out.push_back("events must be time-ordered");
      break;
    }
  for (const EventSpec& e : s.events)
    if (e.at < 0.0) {
      out.push_back("event times must be >= 0");
      break;
    }
  for (const ConverterSpec& c : s.converters) {
    if (!(c.params.s_n > 0.0)) out.push_back("converter '" + c.id + "': rating must be positive");
    if (!(c.params.i_max > 0.0)) out.push_back("converter '" + c.id + "': i_max must be positive");
    if (c.params.p_max < 0.0) out.push_back("converter '" + c.id + "': p_max must be >= 0");
  }

  try {
    NetworkModel net = s.build_network();
    const auto wv = validate_weights(s.weights, net);
    out.insert(out.end(), wv.begin(), wv.end());
    for (const EventSpec& e : s.events) {
      if (e.kind == EventSpec::Kind::LoadStep) net.node_index(e.node);
      if (e.kind == EventSpec::Kind::EnableVac || e.kind == EventSpec::Kind::SetSetpoint)
        net.dg_index(e.converter);
      if (e.kind == EventSpec::Kind::SetWeights) {
        const auto ev_wv = validate_weights(e.weights, net);
        for (const std::string& msg : ev_wv) out.push_back("event set_weights: " + msg);
      }
    }
  } catch (const Error& e) {
    out.push_back(e.what());
  }
  return out;
}

}  // namespace vac
