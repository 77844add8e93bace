#pragma once

#include <cmath>
#include <vector>

#include "vac/converter.hpp"
#include "vac/network.hpp"
#include "vac/secondary.hpp"

namespace vactest {

// Reference four-node system used across the tests: grid source behind an RL
// tie at N1, a mixed feeder N1-N2-N3 and a generation-only feeder N1-N4.
struct TableSystem {
  vac::PerUnitBase base{75e3, 400.0, 50.0};
  vac::NetworkModel net;
  std::vector<vac::ConverterParams> params;
  std::vector<vac::Setpoints> setpoints;
  std::vector<vac::VacGains> gains;
  std::vector<bool> vac_on;

  TableSystem() : net(make_net(base)) {
    const double v_nom = base.v_d_nom();
    for (int i = 0; i < 3; ++i) {
      vac::ConverterParams p;
      p.s_n = 15e3;
      p.u_dc = 680.0;
      p.lcl = {2.3e-3, 0.93e-3, 0.1606, 0.0649, 8.8e-6};
      p.pi_current = {5.14, 593.27};
      p.pll = {0.05, 0.95};
      p.t_f1 = 0.1;
      p.t_f2 = 0.1;
      p.i_max = vac::ConverterParams::rated_peak_current(p.s_n, v_nom);
      p.p_max = 15e3;
      p.v_floor = 0.1 * v_nom;
      p.d_limit_mode = vac::DLimitMode::PowerAtVoltage;
      params.push_back(p);
      vac::Setpoints sp;
      sp.p_ref = (i == 0) ? 9e3 : (i == 1) ? 12e3 : 15e3;
      sp.q_ref = 0.0;
      sp.v_ref = {v_nom, 0.0};
      setpoints.push_back(sp);
      gains.push_back({0.2255, 0.0032});
      vac_on.push_back(true);
    }
  }

  static vac::NetworkModel make_net(const vac::PerUnitBase& base) {
    const double w = base.omega_n();
    std::vector<vac::Line> lines = {
        {0, 1, vac::rl_to_admittance({0.7, 0.9e-3}, w)},
        {1, 2, vac::rl_to_admittance({1.0, 1.2e-3}, w)},
        {0, 3, vac::rl_to_admittance({1.075, 1.3e-3}, w)},
    };
    vac::GridSource src;
    src.node = 0;
    src.v = {base.v_d_nom(), 0.0};
    src.y_g = vac::rl_to_admittance({0.08, 0.25e-3}, w);
    vac::NetworkModel net(base, {"N1", "N2", "N3", "N4"}, std::move(lines), src);
    net.set_load(0, vac::LoadSpec::constant_power(50e3, 0.0));
    net.set_load(1, vac::LoadSpec::constant_power(10e3, 0.0));
    net.set_load(2, vac::LoadSpec::constant_power(20e3, 0.0));
    net.attach_dg(1, "DG1");
    net.attach_dg(2, "DG2");
    net.attach_dg(3, "DG3");
    return net;
  }

  vac::InjectionFn injection() const {
    return [this](int dg, const vac::DqVec& v) {
      const double ang = std::atan2(v.q, v.d);
      const double mag = std::max(v.magnitude(), 0.1 * base.v_d_nom());
      auto [i_local, flags] = vac::steady_state_injection(
          gains[dg], setpoints[dg], params[dg], {mag, 0.0}, base.omega_n(), vac_on[dg]);
      (void)flags;
      return vac::rotate(i_local, vac::FrameAngle{ang});
    };
  }

  vac::MeasurementSnapshot snapshot(const vac::NetworkSolution& sol) const {
    vac::MeasurementSnapshot snap;
    snap.timestamp = 0.0;
    for (int j = 0; j < net.node_count(); ++j) {
      const vac::DqVec v = sol.v[j];
      const double ang = std::atan2(v.q, v.d);
      snap.delta.push_back(ang);
      snap.v_hat.push_back({v.magnitude(), 0.0});
      snap.i_load.push_back(
          net.load(j)
              ? vac::rotate(vac::load_current(*net.load(j), v, 0.1 * base.v_d_nom()),
                            vac::FrameAngle{-ang})
              : vac::DqVec{});
    }
    snap.setpoints = setpoints;
    snap.gains_now = gains;
    snap.vac_active = vac_on;
    return snap;
  }

  std::vector<double> i_max_list() const {
    std::vector<double> out;
    for (const auto& p : params) out.push_back(p.i_max);
    return out;
  }
};

}  // namespace vactest
