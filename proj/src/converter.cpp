#include "vac/converter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace vac {

PllState pll_step(const PllState& s, const PiGains& gains, double omega_n, double v_sq,
                  double dt) {
  if (!(dt > 0.0)) throw Error("pll_step: dt must be positive");
  PllState n;
  n.x = s.x + v_sq * dt;
  n.omega_g = gains.k_i * n.x + gains.k_p * v_sq + omega_n;
  n.delta = FrameAngle::wrapped(s.delta + (n.omega_g - omega_n) * dt).rad;
  return n;
}

DqVec vac_dynamic_step(const DqVec& i_v, const RLParams& gains, const DqVec& v_s,
                       const DqVec& v_ref, double omega_n, double dt) {
  if (!(gains.l > 0.0)) throw Error("vac_dynamic_step: l_v must be positive");
  if (!(dt > 0.0)) throw Error("vac_dynamic_step: dt must be positive");
  // In complex form di/dt = lambda i + u with lambda = -r/l - j omega_n and
  // u = (v_ref - v_s)/l; the exact step is i' = e^(lambda dt)(i - i_ss) + i_ss
  // where i_ss = Y_v (v_ref - v_s) is the quasi-stationary value.
  const std::complex<double> lambda(-gains.r / gains.l, -omega_n);
  const std::complex<double> i_ss =
      to_complex(rl_to_admittance(gains, omega_n)) * to_complex(v_ref - v_s);
  const std::complex<double> i_next =
      std::exp(lambda * dt) * (to_complex(i_v) - i_ss) + i_ss;
  return from_complex(i_next);
}

DqVec pq_current_ref(const Setpoints& sp, double v_sd, double v_floor) {
  if (!(v_sd > v_floor)) throw Error("pq_current_ref: voltage collapse guard");
  return {2.0 * sp.p_ref / (3.0 * v_sd), -2.0 * sp.q_ref / (3.0 * v_sd)};
}

std::pair<DqVec, SatFlags> apply_current_limits(const DqVec& i_ref, const ConverterParams& p,
                                                double v_sd) {
  if (!(p.i_max > 0.0)) throw Error("apply_current_limits: i_max must be positive");
  double d_ceiling = p.i_max;
  if (p.d_limit_mode == DLimitMode::DcBus) {
    if (p.u_dc > 0.0 && p.p_max >= 0.0) d_ceiling = std::min(d_ceiling, p.p_max / p.u_dc);
  } else {
    const double v = std::max(v_sd, 1e-6);
    d_ceiling = std::min(d_ceiling, 2.0 * p.p_max / (3.0 * v));
  }
  SatFlags flags;
  double i_d = std::clamp(i_ref.d, 0.0, d_ceiling);
  flags.d_limited = i_d != i_ref.d;
  const double q_margin2 = p.i_max * p.i_max - i_d * i_d;
  const double q_cap = q_margin2 > 0.0 ? std::sqrt(q_margin2) : 0.0;
  double i_q = std::clamp(i_ref.q, -q_cap, q_cap);
  flags.q_limited = i_q != i_ref.q;
  return {DqVec{i_d, i_q}, flags};
}

std::pair<DqVec, SatFlags> steady_state_injection(const VacGains& gains, const Setpoints& sp,
                                                  const ConverterParams& p,
                                                  const DqVec& v_s_local, double omega_n,
                                                  bool vac_enabled) {
  DqVec i_v{};
  if (vac_enabled) i_v = vac_quasi_static(gains.admittance(omega_n), v_s_local, sp.v_ref);
  const DqVec i_pq = pq_current_ref(sp, v_s_local.d, p.v_floor);
  return apply_current_limits(compose_current_ref(i_v, i_pq, vac_enabled), p, v_s_local.d);
}

VacGains gain_ramp_step(const VacGains& current, const VacGains& target, double dt,
                        double t_f2) {
  if (!(dt > 0.0)) throw Error("gain_ramp_step: dt must be positive");
  if (!(t_f2 > 0.0)) return target;
  const double a = std::exp(-dt / t_f2);
  return {target.r_v + (current.r_v - target.r_v) * a,
          target.l_v + (current.l_v - target.l_v) * a};
}

std::pair<double, double> droop_baseline(double v_mag, const DroopConfig& cfg) {
  if (cfg.k_p < 0.0 || cfg.k_q < 0.0) throw Error("droop_baseline: slopes must be >= 0");
  double err = cfg.v_nom - v_mag;  // positive on undervoltage
  if (std::fabs(err) <= cfg.deadband)
    err = 0.0;
  else
    err -= std::copysign(cfg.deadband, err);
  const double dq = cfg.k_q * err;
  const double dp = (cfg.kind == DroopConfig::Kind::PV_QV) ? cfg.k_p * err : 0.0;
  return {dp, dq};
}

void SecondOrderLag::init(double omega, double zeta, double dt) {
  // ZOH discretisation of x'' = omega^2 (u - x) - 2 zeta omega x'.
  const double s = zeta * omega;
  const double wd = omega * std::sqrt(std::max(1e-12, 1.0 - zeta * zeta));
  const double e = std::exp(-s * dt);
  const double cs = std::cos(wd * dt);
  const double sn = std::sin(wd * dt);
  phi_[0] = e * (cs + s / wd * sn);
  phi_[1] = e * sn / wd;
  phi_[2] = -e * omega * omega / wd * sn;
  phi_[3] = e * (cs - s / wd * sn);
  // gamma = A^-1 (phi - I) B with A = [0 1; -w^2 -2 z w], B = [0; w^2]:
  // A^-1 = [-2 z / w, -1/w^2; 1, 0].
  const double p00 = phi_[0] - 1.0, p01 = phi_[1];
  const double p10 = phi_[2], p11 = phi_[3] - 1.0;
  const double w2 = omega * omega;
  gam_[0] = (-2.0 * zeta / omega) * (p01 * w2) + (-1.0 / w2) * (p11 * w2);
  gam_[1] = 1.0 * (p01 * w2);
  (void)p00;
  (void)p10;
  active_ = true;
}

void SecondOrderLag::reset(double y0) {
  y_ = y0;
  yd_ = 0.0;
}

double SecondOrderLag::step(double u) {
  if (!active_) {
    y_ = u;
    return y_;
  }
  const double y = phi_[0] * y_ + phi_[1] * yd_ + gam_[0] * u;
  const double yd = phi_[2] * y_ + phi_[3] * yd_ + gam_[1] * u;
  y_ = y;
  yd_ = yd;
  return y_;
}

}  // namespace vac
