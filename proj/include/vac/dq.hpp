#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vac {

inline constexpr double kPi = std::numbers::pi;

// Library-wide error type; thrown on contract violations and solver failures.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Voltage/current space vector projected on a rotating frame.
// Peak (amplitude-invariant) scaling: the magnitude equals the peak phase value.
struct DqVec {
  double d = 0.0;
  double q = 0.0;

  double magnitude() const { return std::hypot(d, q); }
  bool finite() const { return std::isfinite(d) && std::isfinite(q); }

  DqVec operator+(const DqVec& o) const { return {d + o.d, q + o.q}; }
  DqVec operator-(const DqVec& o) const { return {d - o.d, q - o.q}; }
  DqVec operator*(double s) const { return {d * s, q * s}; }
  DqVec operator-() const { return {-d, -q}; }
};

inline std::complex<double> to_complex(const DqVec& v) { return {v.d, v.q}; }
inline DqVec from_complex(const std::complex<double>& c) { return {c.real(), c.imag()}; }

// Angle between a local dq frame and the common DQ frame, wrapped to (-pi, pi].
struct FrameAngle {
  double rad = 0.0;

  static FrameAngle wrapped(double angle) {
    double a = std::fmod(angle + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return {a - kPi};
  }
};

// Local -> common frame rotation; rotate(v, -delta) maps back.
inline DqVec rotate(const DqVec& v, FrameAngle delta) {
  const double c = std::cos(delta.rad);
  const double s = std::sin(delta.rad);
  return {c * v.d - s * v.q, s * v.d + c * v.q};
}

// Structured 2x2 matrix [g, -b; b, g]. The family is closed under addition,
// multiplication and inversion, and is isomorphic to the complex number g + jb.
struct Admittance2 {
  double g = 0.0;
  double b = 0.0;

  double norm2() const { return g * g + b * b; }
};

inline std::complex<double> to_complex(const Admittance2& y) { return {y.g, y.b}; }
inline Admittance2 adm_from_complex(const std::complex<double>& c) {
  return {c.real(), c.imag()};
}

inline DqVec adm_apply(const Admittance2& y, const DqVec& v) {
  return {y.g * v.d - y.b * v.q, y.b * v.d + y.g * v.q};
}

inline Admittance2 adm_add(const Admittance2& a, const Admittance2& b) {
  return {a.g + b.g, a.b + b.b};
}

inline Admittance2 adm_compose(const Admittance2& a, const Admittance2& b) {
  return adm_from_complex(to_complex(a) * to_complex(b));
}

inline Admittance2 adm_inverse(const Admittance2& y) {
  const double n = y.norm2();
  if (n <= 0.0) throw Error("adm_inverse: singular admittance");
  return {y.g / n, -y.b / n};
}

// Series R-L branch parameters (ohm, henry). Also carries virtual gains, where
// positivity is enforced by the gain scheduler's constraints rather than here.
struct RLParams {
  double r = 0.0;
  double l = 0.0;
};

// Series impedance r + jwl mapped to the admittance plane:
//   g = r / (r^2 + (wl)^2),  b = -wl / (r^2 + (wl)^2).
inline Admittance2 rl_to_admittance(const RLParams& rl, double omega_n) {
  const double x = omega_n * rl.l;
  const double z2 = rl.r * rl.r + x * x;
  if (z2 <= 0.0) throw Error("rl_to_admittance: zero impedance");
  return {rl.r / z2, -x / z2};
}

// Exact inverse of rl_to_admittance on g^2 + b^2 > 0.
inline RLParams admittance_to_rl(const Admittance2& y, double omega_n) {
  const double n = y.norm2();
  if (n <= 0.0) throw Error("admittance_to_rl: zero admittance");
  return {y.g / n, -y.b / (n * omega_n)};
}

// System base quantities; v_base is line-to-line rms.
struct PerUnitBase {
  double s_base = 0.0;  // VA
  double v_base = 0.0;  // V, line-to-line rms
  double f_n = 0.0;     // Hz

  PerUnitBase() = default;
  PerUnitBase(double s, double v, double f) : s_base(s), v_base(v), f_n(f) {
    if (!(s > 0.0) || !(v > 0.0) || !(f > 0.0))
      throw Error("PerUnitBase: s_base, v_base and f_n must be strictly positive");
  }

  double omega_n() const { return 2.0 * kPi * f_n; }
  double z_base() const { return v_base * v_base / s_base; }
  double l_base() const { return z_base() / omega_n(); }
  // Peak phase value of the nominal space vector.
  double v_d_nom() const { return v_base * std::sqrt(2.0) / std::sqrt(3.0); }
  // Peak current that carries s_base at nominal voltage (s = 3/2 v i).
  double i_base() const { return s_base / (1.5 * v_d_nom()); }
};

}  // namespace vac
