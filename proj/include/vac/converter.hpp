#pragma once

#include <utility>

#include "vac/dq.hpp"

namespace vac {

struct LclParams {
  double l_f1 = 0.0, l_f2 = 0.0;  // H
  double r_f1 = 0.0, r_f2 = 0.0;  // ohm
  double c_f = 0.0;               // F
};

struct PiGains {
  double k_p = 0.0;
  double k_i = 0.0;
};

// How the d-axis current ceiling is derived from the source power limit:
// DcBus uses p_max/u_dc, PowerAtVoltage uses 2 p_max / (3 v_sd).
enum class DLimitMode { DcBus, PowerAtVoltage };

struct SlewLimits {
  bool enabled = false;
  double i_per_s = 14.14;   // A/s per axis on the current command
  double p_per_s = 50e3;    // W/s on the active power setpoint
};

struct ConverterParams {
  double s_n = 0.0;    // VA rating
  double u_dc = 0.0;   // V
  LclParams lcl;
  PiGains pi_current;
  PiGains pll;
  double t_f1 = 0.1;   // s, voltage measurement filter
  double t_f2 = 0.1;   // s, gain ramp filter
  double i_max = 0.0;  // A, peak space-vector current limit
  double p_max = 0.0;  // W, source power limit
  double v_floor = 0.0;  // V, voltage collapse guard for setpoint currents
  DLimitMode d_limit_mode = DLimitMode::DcBus;
  SlewLimits slew;

  // Rated peak current: apparent rating sits exactly on the limit at nominal voltage.
  static double rated_peak_current(double s_n, double v_d_nom) { return s_n / (1.5 * v_d_nom); }
};

// Virtual gains in canonical R-L form (ohm, henry).
struct VacGains {
  double r_v = 0.0;
  double l_v = 0.0;

  Admittance2 admittance(double omega_n) const {
    return rl_to_admittance({r_v, l_v}, omega_n);
  }
};

struct Setpoints {
  double p_ref = 0.0;  // W
  double q_ref = 0.0;  // var
  DqVec v_ref{};       // V, local frame; v_ref.d = nominal peak phase, v_ref.q = 0
};

struct SatFlags {
  bool d_limited = false;
  bool q_limited = false;
  bool any() const { return d_limited || q_limited; }
};

// Synchronisation loop state. delta is the local frame angle relative to the
// common frame (which rotates at omega_n); theta_pll = delta + omega_n t.
struct PllState {
  double x = 0.0;        // integrator
  double delta = 0.0;    // rad, wrapped
  double omega_g = 0.0;  // rad/s
};

// One integration step of the synchronisation loop:
//   x' = x + v_sq dt,  omega_g = k_i x + k_p v_sq + omega_n,
//   delta advanced by (omega_g - omega_n) dt.
PllState pll_step(const PllState& s, const PiGains& gains, double omega_n, double v_sq,
                  double dt);

// Quasi-stationary virtual admittance current: i_v = Y_v (v_ref - v_s).
inline DqVec vac_quasi_static(const Admittance2& y_v, const DqVec& v_s, const DqVec& v_ref) {
  return adm_apply(y_v, v_ref - v_s);
}

// One step of the dynamic virtual-circuit form
//   l_v di_v/dt = (v_ref - v_s) - r_v i_v -+ omega_n l_v cross-coupling,
// discretised exactly for constant inputs over dt. Its fixed point equals the
// quasi-stationary output.
DqVec vac_dynamic_step(const DqVec& i_v, const RLParams& gains, const DqVec& v_s,
                       const DqVec& v_ref, double omega_n, double dt);

// Setpoint currents, synchronised with the d axis:
//   i_d = 2 p / (3 v_sd),  i_q = -2 q / (3 v_sd).
DqVec pq_current_ref(const Setpoints& sp, double v_sd, double v_floor);

inline DqVec compose_current_ref(const DqVec& i_v, const DqVec& i_pq, bool vac_enabled = true) {
  return vac_enabled ? i_v + i_pq : i_pq;
}

// Saturation with active power prioritised: the d component is clamped to
// [0, min(i_max, d-ceiling)], then the q component to the remaining circle
// margin, preserving its sign.
std::pair<DqVec, SatFlags> apply_current_limits(const DqVec& i_ref, const ConverterParams& p,
                                                double v_sd);

// Steady-state injection consumed by the network solver, in the local frame:
// saturate(compose(vac_quasi_static, pq_current_ref)).
std::pair<DqVec, SatFlags> steady_state_injection(const VacGains& gains, const Setpoints& sp,
                                                  const ConverterParams& p,
                                                  const DqVec& v_s_local, double omega_n,
                                                  bool vac_enabled);

// First-order lag of both gains toward the target with time constant t_f2.
VacGains gain_ramp_step(const VacGains& current, const VacGains& target, double dt, double t_f2);

struct DroopConfig {
  enum class Kind { QV, PV_QV };
  Kind kind = Kind::QV;
  double k_p = 0.0;       // W per V of magnitude error
  double k_q = 0.0;       // var per V
  double deadband = 0.0;  // V
  double v_nom = 0.0;     // V, peak phase
};

// Linear setpoint offsets (dP, dQ) from the voltage magnitude error.
std::pair<double, double> droop_baseline(double v_mag, const DroopConfig& cfg);

// Second-order tracking lag (current loop surrogate), discretised exactly for
// a fixed step via the closed-form matrix exponential.
class SecondOrderLag {
 public:
  SecondOrderLag() = default;  // identity until init()
  void init(double omega, double zeta, double dt);
  void reset(double y0);
  double step(double u);
  double value() const { return y_; }

 private:
  bool active_ = false;
  double phi_[4] = {1, 0, 0, 1};
  double gam_[2] = {0, 0};
  double y_ = 0.0;
  double yd_ = 0.0;
};

}  // namespace vac
