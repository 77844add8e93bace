#include "vac/secondary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace vac {

namespace {

using Cplx = std::complex<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Near-zero admittances are emitted as a practically open virtual branch.
constexpr double kZeroAdmittanceCut = 1e-10;  // S
constexpr double kOpenBranchR = 1e9;          // ohm

}  // namespace

void validate_snapshot(const NetworkModel& net, const MeasurementSnapshot& snap) {
  const size_t n = static_cast<size_t>(net.node_count());
  const size_t d = static_cast<size_t>(net.dg_count());
  if (snap.v_hat.size() != n || snap.delta.size() != n || snap.i_load.size() != n)
    throw Error("snapshot: per-node vectors must cover every node");
  if (snap.setpoints.size() != d || snap.gains_now.size() != d || snap.vac_active.size() != d)
    throw Error("snapshot: per-converter vectors must cover every converter");
  for (size_t j = 0; j < n; ++j)
    if (!snap.v_hat[j].finite() || !std::isfinite(snap.delta[j]) || !snap.i_load[j].finite())
      throw Error("snapshot: non-finite measurement at node '" + net.node_name(int(j)) + "'");
}

std::vector<std::string> validate_weights(const WeightConfig& w, const NetworkModel& net) {
  std::vector<std::string> out;
  if (static_cast<int>(w.a.size()) != net.node_count())
    out.push_back("weights.a must have one entry per node");
  if (static_cast<int>(w.b.size()) != net.dg_count())
    out.push_back("weights.b must have one entry per converter");
  if (!out.empty()) return out;

  for (int j = 0; j < net.node_count(); ++j) {
    if (!(w.a[j] > 0.0))
      out.push_back("a must be > 0 at node '" + net.node_name(j) + "'");
    else if (w.a[j] > 1.0)
      out.push_back("a must be <= 1 at node '" + net.node_name(j) + "'");
  }
  for (int i = 0; i < net.dg_count(); ++i) {
    if (w.b[i] < 0.0)
      out.push_back("b must be >= 0 for converter '" + net.dg_name(i) + "'");
    else if (!(w.b[i] < 1.0))
      out.push_back("b must be < 1 for converter '" + net.dg_name(i) + "'");
  }
  // Sum rule per converter, covering multiple converters on one node.
  for (int i = 0; i < net.dg_count(); ++i) {
    const int j = net.dg_node(i);
    if (j < 0 || j >= net.node_count()) continue;
    if (std::fabs(w.a[j] + w.b[i] - 1.0) > 1e-12)
      out.push_back("a_j + b_i must equal 1 for converter '" + net.dg_name(i) + "' at node '" +
                    net.node_name(j) + "'");
  }
  return out;
}

SubproblemSpec build_subproblem(const NetworkModel& net, const MeasurementSnapshot& snap,
                                int dg, double a_j, double b_i, const GainBounds& bounds,
                                double i_max, double v_floor) {
  const int node = net.dg_node(dg);
  SubproblemSpec s;
  s.a_j = a_j;
  s.b_i = b_i;
  s.i_max = i_max;
  s.omega_n = net.base().omega_n();
  s.bounds = bounds;
  s.v_nom = net.base().v_d_nom();

  const FrameAngle delta{snap.delta[node]};
  const Setpoints& sp = snap.setpoints[dg];
  const double v_sd = std::max(snap.v_hat[node].d, v_floor);
  const DqVec i_pq_local{2.0 * sp.p_ref / (3.0 * v_sd), -2.0 * sp.q_ref / (3.0 * v_sd)};
  s.i_pq = to_complex(rotate(i_pq_local, delta));
  s.v_star = to_complex(rotate(sp.v_ref, delta));
  s.measured_dev = s.v_nom - snap.v_hat[node].magnitude();

  Cplx y_sum(0.0, 0.0);
  Cplx rhs = s.i_pq;
  if (net.load(node))
    rhs -= to_complex(rotate(snap.i_load[node], delta));
  for (const NetworkModel::Neighbor& nb : net.neighbors(node)) {
    const Cplx y = to_complex(nb.y);
    y_sum += y;
    rhs += y * to_complex(rotate(snap.v_hat[nb.node], FrameAngle{snap.delta[nb.node]}));
  }
  if (net.source().node == node) {
    const Cplx y = to_complex(net.source().y_g);
    y_sum += y;
    rhs += y * to_complex(net.source().v);
  }
  if (std::norm(y_sum) <= 0.0) throw Error("build_subproblem: singular admittance sum");
  s.y_sum = y_sum;
  s.rhs0 = rhs;
  return s;
}

DqVec predicted_node_voltage(double g, double b, const SubproblemSpec& s) {
  const Cplx y_v(g, b);
  const Cplx den = s.y_sum + y_v;
  if (std::norm(den) <= 0.0) throw Error("predicted_node_voltage: singular system");
  return from_complex((s.rhs0 + y_v * s.v_star) / den);
}

DqVec predicted_node_voltage(double g, double b, int node, const MeasurementSnapshot& snap,
                             const NetworkModel& net, double v_floor) {
  const auto dg = net.dg_at(node);
  if (!dg) throw Error("predicted_node_voltage: node hosts no converter");
  const SubproblemSpec s =
      build_subproblem(net, snap, *dg, 1.0, 0.0, GainBounds{}, 1e30, v_floor);
  return predicted_node_voltage(g, b, s);
}

DqVec predicted_virtual_current(double g, double b, const SubproblemSpec& s) {
  // i_v = Y_v (v_star - v_j) = Y_v (v_star y_sum - rhs0) / (y_sum + Y_v)
  const Cplx y_v(g, b);
  return from_complex(y_v * (s.v_star * s.y_sum - s.rhs0) / (s.y_sum + y_v));
}

double objective_term(double g, double b, const SubproblemSpec& s) {
  const Cplx y_v(g, b);
  const Cplx den = s.y_sum + y_v;
  const Cplx v_j = (s.rhs0 + y_v * s.v_star) / den;
  const double dev = s.v_nom - std::abs(v_j);
  double f = s.a_j * dev * dev;
  if (s.b_i != 0.0) {
    const Cplx i_v = y_v * (s.v_star * s.y_sum - s.rhs0) / den;
    f += s.b_i * std::norm(i_v);
  }
  return f;
}

StabilityResiduals stability_constraint_residuals(double g, double b, const GainBounds& bounds,
                                                  double omega_n) {
  const double n2 = g * g + b * b;
  return {-g + bounds.r_v_min * n2, b + omega_n * bounds.l_v_min * n2};
}

double current_constraint_residual(double g, double b, const SubproblemSpec& s) {
  const Cplx y_v(g, b);
  const Cplx i_c = y_v * (s.v_star * s.y_sum - s.rhs0) / (s.y_sum + y_v) + s.i_pq;
  return std::norm(i_c) - s.i_max * s.i_max;
}

VacGains gains_from_admittance(double g, double b, double omega_n, bool* zero_admittance) {
  const double n2 = g * g + b * b;
  if (n2 < kZeroAdmittanceCut * kZeroAdmittanceCut) {
    if (zero_admittance) *zero_admittance = true;
    return {kOpenBranchR, 0.0};
  }
  if (zero_admittance) *zero_admittance = false;
  const RLParams rl = admittance_to_rl({g, b}, omega_n);
  return {rl.r, rl.l};
}

namespace {

struct Box {
  double g_lo, g_hi, b_lo, b_hi;
};

Box search_box(const SubproblemSpec& s, double cap_factor) {
  const double cap = cap_factor * std::max(std::abs(s.y_sum), 1e-6);
  const double g_hi = s.bounds.r_v_min > 0.0 ? std::min(1.0 / s.bounds.r_v_min, cap) : cap;
  const double b_lo =
      s.bounds.l_v_min > 0.0 ? std::max(-1.0 / (s.omega_n * s.bounds.l_v_min), -cap) : -cap;
  return {0.0, g_hi, b_lo, 0.0};
}

// Search-time feasibility: stability constraints closed, rating constraint
// with a small interior shell so emitted points satisfy it strictly.
bool search_feasible(double g, double b, const SubproblemSpec& s) {
  const StabilityResiduals st = stability_constraint_residuals(g, b, s.bounds, s.omega_n);
  if (st.c1 > 0.0 || st.c2 > 0.0) return false;
  return current_constraint_residual(g, b, s) <= -1e-6 * s.i_max * s.i_max;
}

struct Candidate {
  double g = 0.0, b = 0.0, f = kInf;
  bool valid = false;
};

void consider(Candidate& best, double g, double b, const SubproblemSpec& s) {
  if (!search_feasible(g, b, s)) return;
  const double f = objective_term(g, b, s);
  if (!best.valid || f < best.f) best = {g, b, f, true};
}

// Deterministic Nelder-Mead with infeasible-point rejection.
template <class F>
Candidate nelder_mead_on(F&& eval, double g0, double b0, double step_g, double step_b,
                         int max_evals) {
  struct Vertex {
    double g, b, f;
  };
  std::array<Vertex, 3> v{Vertex{g0, b0, eval(g0, b0)},
                          Vertex{g0 + step_g, b0, eval(g0 + step_g, b0)},
                          Vertex{g0, b0 + step_b, eval(g0, b0 + step_b)}};
  int evals = 3;
  const double scale = std::max({std::fabs(step_g), std::fabs(step_b), 1e-12});
  while (evals < max_evals) {
    std::sort(v.begin(), v.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    const double diam = std::max(std::hypot(v[1].g - v[0].g, v[1].b - v[0].b),
                                 std::hypot(v[2].g - v[0].g, v[2].b - v[0].b));
    if (diam < 1e-11 * scale) break;
    const double cg = 0.5 * (v[0].g + v[1].g);
    const double cb = 0.5 * (v[0].b + v[1].b);
    const double rg = cg + (cg - v[2].g);
    const double rb = cb + (cb - v[2].b);
    const double fr = eval(rg, rb);
    ++evals;
    if (fr < v[0].f) {
      const double eg = cg + 2.0 * (cg - v[2].g);
      const double eb = cb + 2.0 * (cb - v[2].b);
      const double fe = eval(eg, eb);
      ++evals;
      if (fe < fr)
        v[2] = {eg, eb, fe};
      else
        v[2] = {rg, rb, fr};
    } else if (fr < v[1].f) {
      v[2] = {rg, rb, fr};
    } else {
      const bool use_r = fr < v[2].f;
      const double wg = use_r ? rg : v[2].g;
      const double wb = use_r ? rb : v[2].b;
      const double fw = use_r ? fr : v[2].f;
      const double xg = cg + 0.5 * (wg - cg);
      const double xb = cb + 0.5 * (wb - cb);
      const double fx = eval(xg, xb);
      ++evals;
      if (fx < fw) {
        v[2] = {xg, xb, fx};
      } else {
        for (int k = 1; k < 3; ++k) {
          v[k].g = v[0].g + 0.5 * (v[k].g - v[0].g);
          v[k].b = v[0].b + 0.5 * (v[k].b - v[0].b);
          v[k].f = eval(v[k].g, v[k].b);
          ++evals;
        }
      }
    }
  }
  std::sort(v.begin(), v.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  if (!std::isfinite(v[0].f)) return {};
  return {v[0].g, v[0].b, v[0].f, true};
}

Candidate nelder_mead(const SubproblemSpec& s, double g0, double b0, double step_g,
                      double step_b, int max_evals) {
  auto eval = [&](double g, double b) -> double {
    return search_feasible(g, b, s) ? objective_term(g, b, s) : kInf;
  };
  return nelder_mead_on(eval, g0, b0, step_g, step_b, max_evals);
}

// Scan/refine minimisation of f over t in [lo, hi]; f may return +inf.
template <class F>
void scan_refine(F&& f, double lo, double hi, int coarse, int rounds, double* t_best,
                 double* f_best) {
  double best_t = lo, best_f = kInf;
  double step = (hi - lo) / (coarse - 1);
  for (int i = 0; i < coarse; ++i) {
    const double t = lo + i * step;
    const double ft = f(t);
    if (ft < best_f) {
      best_f = ft;
      best_t = t;
    }
  }
  for (int r = 0; r < rounds; ++r) {
    const double w_lo = std::max(lo, best_t - 2.0 * step);
    const double w_hi = std::min(hi, best_t + 2.0 * step);
    const int n = 65;
    step = (w_hi - w_lo) / (n - 1);
    if (!(step > 0.0)) break;
    for (int i = 0; i < n; ++i) {
      const double t = w_lo + i * step;
      const double ft = f(t);
      if (ft < best_f) {
        best_f = ft;
        best_t = t;
      }
    }
  }
  *t_best = best_t;
  *f_best = best_f;
}

// Exact 1-D optimisation along the circle c1 = 0 (virtual resistance at its
// minimum): (g, b) = c (1 + cos t, sin t), t in (-pi, 0), c = 1/(2 r_v_min).
// A window half-width < pi restricts the scan to an arc around t_center.
template <class F>
void polish_c1_on(F&& eval, const SubproblemSpec& s, Candidate& best, double t_center = 0.0,
                  double half_width = kPi) {
  if (!(s.bounds.r_v_min > 0.0)) return;
  const double c = 0.5 / s.bounds.r_v_min;
  auto f = [&](double t) -> double {
    return eval(c * (1.0 + std::cos(t)), c * std::sin(t));
  };
  const double lo = std::max(-kPi + 1e-9, t_center - half_width);
  const double hi = std::min(-1e-9, t_center + half_width);
  if (!(hi > lo)) return;
  double t_best, f_best;
  scan_refine(f, lo, hi, 512, 6, &t_best, &f_best);
  if (std::isfinite(f_best) && (!best.valid || f_best < best.f))
    best = {c * (1.0 + std::cos(t_best)), c * std::sin(t_best), f_best, true};
}

// Same along c2 = 0 (virtual inductance at its minimum):
// (g, b) = c (sin t, cos t - 1), t in (0, pi), c = 1/(2 w l_v_min).
template <class F>
void polish_c2_on(F&& eval, const SubproblemSpec& s, Candidate& best, double t_center = 0.0,
                  double half_width = kPi) {
  if (!(s.bounds.l_v_min > 0.0)) return;
  const double c = 0.5 / (s.omega_n * s.bounds.l_v_min);
  auto f = [&](double t) -> double {
    return eval(c * std::sin(t), c * (std::cos(t) - 1.0));
  };
  const double lo = std::max(1e-9, t_center - half_width);
  const double hi = std::min(kPi - 1e-9, t_center + half_width);
  if (!(hi > lo)) return;
  double t_best, f_best;
  scan_refine(f, lo, hi, 512, 6, &t_best, &f_best);
  if (std::isfinite(f_best) && (!best.valid || f_best < best.f))
    best = {c * std::sin(t_best), c * (std::cos(t_best) - 1.0), f_best, true};
}

// Contour descent along the rating-constraint shell. Nelder-Mead wedges
// against curved boundaries; walking the contour with projection steps
// resolves boundary-attached optima to full precision.
template <class F>
void polish_c3_on(F&& eval, const SubproblemSpec& s, Candidate& best) {
  const double y_ref = std::abs(s.y_sum);
  const double i2 = s.i_max * s.i_max;
  const double shell = -1.05e-6 * i2;  // just inside the search feasibility
  auto c3 = [&](double g, double b) { return current_constraint_residual(g, b, s); };
  const double href = 1e-6 * y_ref;
  auto grad = [&](double g, double b) {
    return std::pair{(c3(g + href, b) - c3(g - href, b)) / (2.0 * href),
                     (c3(g, b + href) - c3(g, b - href)) / (2.0 * href)};
  };
  auto project = [&](double& g, double& b) -> bool {
    for (int it = 0; it < 10; ++it) {
      const double v = c3(g, b) - shell;
      if (std::fabs(v) < 1e-10 * i2) return true;
      const auto [gx, gy] = grad(g, b);
      const double n2 = gx * gx + gy * gy;
      if (!(n2 > 1e-30)) return false;
      g -= v * gx / n2;
      b -= v * gy / n2;
    }
    return std::fabs(c3(g, b) - shell) < 1e-8 * i2;
  };

  double gc = best.g, bc = best.b;
  if (!project(gc, bc)) return;
  double fc = eval(gc, bc);
  if (!std::isfinite(fc)) return;

  double h = 0.02 * y_ref;
  for (int round = 0; round < 6; ++round) {
    bool improved = false;
    for (double dir : {1.0, -1.0}) {
      double g = gc, b = bc, f = fc;
      for (int step = 0; step < 32; ++step) {
        const auto [gx, gy] = grad(g, b);
        const double n = std::hypot(gx, gy);
        if (!(n > 1e-15)) break;
        double g2 = g + dir * h * (-gy / n);
        double b2 = b + dir * h * (gx / n);
        if (!project(g2, b2)) break;
        const double f2 = eval(g2, b2);
        if (std::isfinite(f2) && f2 < f) {
          g = g2;
          b = b2;
          f = f2;
        } else {
          break;
        }
      }
      if (f < fc) {
        gc = g;
        bc = b;
        fc = f;
        improved = true;
      }
    }
    if (!improved) h *= 0.2;
  }
  if (fc < best.f) best = {gc, bc, fc, true};
}

}  // namespace

SubproblemResult solve_subproblem(const SubproblemSpec& s, const SolveTuning& tuning) {
  const Box box = search_box(s, tuning.box_cap_factor);
  const int n = std::max(tuning.grid_n, 2);
  const double dg_step = (box.g_hi - box.g_lo) / n;
  const double db_step = (box.b_hi - box.b_lo) / n;
  const double y_ref = std::abs(s.y_sum);

  Candidate best;
  std::vector<Candidate> seeds;
  double warm_g = tuning.warm_g;
  double warm_b = tuning.warm_b;
  bool warm_mode = false;
  bool warm_projected = false;
  if (tuning.warm_start) {
    if (search_feasible(warm_g, warm_b, s)) {
      warm_mode = true;
    } else {
      // Gains whose request exceeds the rating at the new operating point are
      // pulled radially inside before continuing from them (both stability
      // circles pass through the origin, and shrinking the admittance
      // shrinks the virtual current).
      for (double k = 0.995; k > 0.35; k *= 0.97) {
        if (search_feasible(k * tuning.warm_g, k * tuning.warm_b, s)) {
          warm_g = k * tuning.warm_g;
          warm_b = k * tuning.warm_b;
          warm_mode = true;
          warm_projected = true;
          break;
        }
      }
    }
  }

  if (warm_mode) {
    // Proximal continuation: refine from the previous gains with selection on
    // f + mu |Y - Y_prev|^2. Fixed points of this iteration are stationary
    // points of the pure objective (the proximal term and its gradient vanish
    // there), while long slides along the near-flat valleys of f are
    // suppressed, which is what lets the recursive scheduler settle.
    const double f_warm = objective_term(warm_g, warm_b, s);
    // Linear proximal penalty: a move of length d must improve the pure
    // objective by at least proximal_weight * f_warm * d / y_ref to be worth
    // taking. Genuine descents pass nearly unimpeded while drift along the
    // objective's flat valleys is thresholded away, so the iteration can
    // repeat its output exactly once locally optimal.
    const double mu = tuning.proximal_weight *
                      std::max(f_warm, 1e-9 * s.v_nom * s.v_nom) / y_ref;
    auto phi = [&](double g, double b) -> double {
      if (!search_feasible(g, b, s)) return kInf;
      const double dg2 = g - warm_g;
      const double db2 = b - warm_b;
      return objective_term(g, b, s) + mu * std::sqrt(dg2 * dg2 + db2 * db2);
    };
    Candidate bestp{warm_g, warm_b, f_warm, true};
    for (const auto& [eg, eb] : tuning.extra_candidates) {
      const double fe = phi(eg, eb);
      if (fe < bestp.f) bestp = {eg, eb, fe, true};
    }
    double step_g = 0.1 * (box.g_hi - box.g_lo);
    double step_b = 0.1 * (box.b_hi - box.b_lo);
    for (int r = 0; r < 3; ++r) {
      Candidate nm = nelder_mead_on(phi, bestp.g, bestp.b, step_g, step_b, tuning.nm_max_evals);
      if (nm.valid && nm.f < bestp.f) bestp = nm;
      step_g *= 0.2;
      step_b *= 0.2;
    }
    const auto st = stability_constraint_residuals(bestp.g, bestp.b, s.bounds, s.omega_n);
    const bool near_c1 = s.bounds.r_v_min > 0.0 && std::fabs(st.c1) < 0.2 * y_ref;
    const bool near_c2 = s.bounds.l_v_min > 0.0 && std::fabs(st.c2) < 0.2 * y_ref;
    if (near_c1) {
      const double c = 0.5 / s.bounds.r_v_min;
      polish_c1_on(phi, s, bestp, std::atan2(bestp.b / c, bestp.g / c - 1.0), 0.3);
    }
    if (near_c2) {
      const double c = 0.5 / (s.omega_n * s.bounds.l_v_min);
      polish_c2_on(phi, s, bestp, std::atan2(bestp.g / c, 1.0 + bestp.b / c), 0.3);
    }
    if (s.bounds.r_v_min > 0.0 && s.bounds.l_v_min > 0.0) {
      // the double-bound corner is the exact admittance of the bound pair;
      // offer it so boundary attachment completes in one move
      const Admittance2 y = rl_to_admittance({s.bounds.r_v_min, s.bounds.l_v_min}, s.omega_n);
      const double fc = phi(y.g, y.b);
      if (fc < bestp.f) bestp = {y.g, y.b, fc, true};
    }
    if (std::fabs(current_constraint_residual(bestp.g, bestp.b, s)) < 5e-3 * s.i_max * s.i_max)
      polish_c3_on(phi, s, bestp);
    // Below the worthwhile-improvement threshold the previous gains repeat
    // exactly, which is what lets the recursion report a stationary point
    // instead of creeping along the objective's flat valleys forever. A
    // rating pull-in is a forced move and never frozen.
    if (!warm_projected && tuning.freeze_tol > 0.0 &&
        f_warm - bestp.f < tuning.freeze_tol * f_warm)
      bestp = {warm_g, warm_b, f_warm, true};
    best = {bestp.g, bestp.b, objective_term(bestp.g, bestp.b, s), true};
  } else {
    // Cell-centred feasible-grid seeding over the whole admissible box,
    // keeping a handful of mutually distant cells as refinement seeds.
    std::vector<Candidate> cells;
    for (int ig = 0; ig < n; ++ig) {
      const double g = box.g_lo + (ig + 0.5) * dg_step;
      for (int ib = 0; ib < n; ++ib) {
        const double b = box.b_lo + (ib + 0.5) * db_step;
        if (!search_feasible(g, b, s)) continue;
        cells.push_back({g, b, objective_term(g, b, s), true});
      }
    }
    std::sort(cells.begin(), cells.end(),
              [](const Candidate& a, const Candidate& c) { return a.f < c.f; });
    seeds.clear();
    const double min_dist = 2.0 * std::hypot(dg_step, db_step);
    for (const Candidate& c : cells) {
      bool distinct = true;
      for (const Candidate& kept : seeds)
        if (std::hypot(c.g - kept.g, c.b - kept.b) < min_dist) distinct = false;
      if (distinct) seeds.push_back(c);
      if (seeds.size() >= 6) break;
    }
    if (!cells.empty()) best = cells.front();
    consider(best, 0.0, 0.0, s);
    for (const auto& [eg, eb] : tuning.extra_candidates) consider(best, eg, eb, s);
  }

  SubproblemResult out;
  if (warm_mode && !warm_projected && best.g == tuning.warm_g && best.b == tuning.warm_b) {
    // exact repetition: skip the inward nudge so the emitted point is
    // bit-identical to the previous one
    out.g = best.g;
    out.b = best.b;
    out.gains = gains_from_admittance(best.g, best.b, s.omega_n, &out.zero_admittance);
    out.unchanged = true;
    out.objective = best.f;
    out.feasible = true;
    const StabilityResiduals stw =
        stability_constraint_residuals(best.g, best.b, s.bounds, s.omega_n);
    out.c1_active = std::fabs(stw.c1) < 1e-6 * y_ref;
    out.c2_active = std::fabs(stw.c2) < 1e-6 * y_ref;
    out.c3_active =
        std::fabs(current_constraint_residual(best.g, best.b, s)) < 1e-4 * s.i_max * s.i_max;
    return out;
  }
  if (!best.valid) {
    // Even the zero-admittance point exceeds the rating: report it with a
    // saturation diagnostic instead of failing the whole iteration.
    out.g = 0.0;
    out.b = 0.0;
    out.gains = {kOpenBranchR, 0.0};
    out.zero_admittance = true;
    out.objective = objective_term(0.0, 0.0, s);
    out.feasible = false;
    out.diagnostic = "setpoint current exceeds the rating even at zero admittance";
    return out;
  }

  if (!warm_mode) {
    auto pure = [&](double g, double b) -> double {
      return search_feasible(g, b, s) ? objective_term(g, b, s) : kInf;
    };
    // Multi-start local refinement from the diverse seeds, then restarts at
    // shrinking scale from the incumbent.
    for (const Candidate& seed : seeds) {
      Candidate nm = nelder_mead(s, seed.g, seed.b, dg_step, db_step, tuning.nm_max_evals);
      if (nm.valid && nm.f < best.f) best = nm;
    }
    double step_g = dg_step, step_b = db_step;
    for (int r = 0; r <= tuning.nm_restarts; ++r) {
      Candidate nm = nelder_mead(s, best.g, best.b, step_g, step_b, tuning.nm_max_evals);
      if (nm.valid && nm.f < best.f) best = nm;
      step_g *= 0.2;
      step_b *= 0.2;
    }
    polish_c1_on(pure, s, best);
    polish_c2_on(pure, s, best);
    if (std::fabs(current_constraint_residual(best.g, best.b, s)) < 5e-3 * s.i_max * s.i_max)
      polish_c3_on(pure, s, best);
    // Corner where both stability bounds are active is exactly the admittance
    // of (r_v_min, l_v_min); add it analytically.
    if (s.bounds.r_v_min > 0.0 && s.bounds.l_v_min > 0.0) {
      const Admittance2 y = rl_to_admittance({s.bounds.r_v_min, s.bounds.l_v_min}, s.omega_n);
      consider(best, y.g, y.b, s);
    }
  }

  // Radial pull toward the origin lands strictly inside both stability disks
  // while moving the objective and rating residual only at 1e-9 relative.
  double g_out = best.g * (1.0 - 1e-9);
  double b_out = best.b * (1.0 - 1e-9);

  out.g = g_out;
  out.b = b_out;
  out.gains = gains_from_admittance(g_out, b_out, s.omega_n, &out.zero_admittance);
  out.objective = objective_term(g_out, b_out, s);
  out.feasible = true;
  const StabilityResiduals st = stability_constraint_residuals(g_out, b_out, s.bounds, s.omega_n);
  out.c1_active = std::fabs(st.c1) < 1e-6 * y_ref;
  out.c2_active = std::fabs(st.c2) < 1e-6 * y_ref;
  out.c3_active =
      std::fabs(current_constraint_residual(g_out, b_out, s)) < 1e-4 * s.i_max * s.i_max;
  return out;
}

SubproblemResult brute_force_oracle(const SubproblemSpec& s, const OracleGrid& grid) {
  const Box outer = search_box(s, SolveTuning{}.box_cap_factor);
  auto feasible = [&](double g, double b) {
    const StabilityResiduals st = stability_constraint_residuals(g, b, s.bounds, s.omega_n);
    return st.c1 <= 0.0 && st.c2 <= 0.0 && current_constraint_residual(g, b, s) <= 0.0;
  };

  // One exhaustive pass over an inclusive lattice; returns the level's best
  // and accumulates the global best.
  Candidate best;
  auto scan = [&](const Box& box, int ng, int nb) -> Candidate {
    Candidate level_best;
    const double sg = (box.g_hi - box.g_lo) / (ng - 1);
    const double sb = (box.b_hi - box.b_lo) / (nb - 1);
    for (int ig = 0; ig < ng; ++ig) {
      const double g = (ig == ng - 1) ? box.g_hi : box.g_lo + ig * sg;
      for (int ib = 0; ib < nb; ++ib) {
        const double b = (ib == nb - 1) ? box.b_hi : box.b_lo + ib * sb;
        if (!feasible(g, b)) continue;
        const double f = objective_term(g, b, s);
        if (!level_best.valid || f < level_best.f) level_best = {g, b, f, true};
        if (!best.valid || f < best.f) best = {g, b, f, true};
      }
    }
    return level_best;
  };

  // Coarse pass, keeping a few mutually distant cells so the zoom is not
  // committed to one segment of a thin feasible sliver.
  const double sg0 = (outer.g_hi - outer.g_lo) / (grid.n_g - 1);
  const double sb0 = (outer.b_hi - outer.b_lo) / (grid.n_b - 1);
  std::vector<Candidate> coarse;
  for (int ig = 0; ig < grid.n_g; ++ig) {
    const double g = (ig == grid.n_g - 1) ? outer.g_hi : outer.g_lo + ig * sg0;
    for (int ib = 0; ib < grid.n_b; ++ib) {
      const double b = (ib == grid.n_b - 1) ? outer.b_hi : outer.b_lo + ib * sb0;
      if (!feasible(g, b)) continue;
      const double f = objective_term(g, b, s);
      coarse.push_back({g, b, f, true});
      if (!best.valid || f < best.f) best = {g, b, f, true};
    }
  }
  if (!best.valid) throw Error("brute_force_oracle: empty feasible grid");
  std::sort(coarse.begin(), coarse.end(),
            [](const Candidate& a, const Candidate& c) { return a.f < c.f; });
  std::vector<Candidate> zoom_seeds;
  const double min_dist = 3.0 * std::hypot(sg0, sb0);
  for (const Candidate& c : coarse) {
    bool distinct = true;
    for (const Candidate& kept : zoom_seeds)
      if (std::hypot(c.g - kept.g, c.b - kept.b) < min_dist) distinct = false;
    if (distinct) zoom_seeds.push_back(c);
    if (zoom_seeds.size() >= 4) break;
  }

  for (const Candidate& seed : zoom_seeds) {
    Box box{std::max(outer.g_lo, seed.g - 1.5 * sg0), std::min(outer.g_hi, seed.g + 1.5 * sg0),
            std::max(outer.b_lo, seed.b - 1.5 * sb0), std::min(outer.b_hi, seed.b + 1.5 * sb0)};
    Candidate local = seed;
    double wg = 3.0 * sg0, wb = 3.0 * sb0;
    for (int level = 1; level <= grid.refine_levels; ++level) {
      const Candidate lb = scan(box, grid.refine_points, grid.refine_points);
      if (lb.valid && lb.f < local.f) local = lb;
      wg = 3.0 * wg / (grid.refine_points - 1);
      wb = 3.0 * wb / (grid.refine_points - 1);
      box = {std::max(outer.g_lo, local.g - 0.5 * wg), std::min(outer.g_hi, local.g + 0.5 * wg),
             std::max(outer.b_lo, local.b - 0.5 * wb), std::min(outer.b_hi, local.b + 0.5 * wb)};
    }
  }

  // Optima pinched into the cusp between a stability circle and the rating
  // surface sit below any lattice resolution. Walk each circle densely,
  // bisect the rating residual's sign changes and take the roots as extra
  // candidates; dense 1-D enumeration, still independent of the solver path.
  auto circle_roots = [&](auto&& point_at, double t_lo, double t_hi) {
    const int n_arc = 8192;
    double prev_t = t_lo;
    auto [pg, pb] = point_at(prev_t);
    double prev_c3 = current_constraint_residual(pg, pb, s);
    auto admit = [&](double g, double b, double) {
      // pull microscopically inside both stability circles so on-circle
      // points are not lost to sign rounding of the closed test
      g *= 1.0 - 1e-12;
      b *= 1.0 - 1e-12;
      if (!feasible(g, b)) return;
      const double f = objective_term(g, b, s);
      if (!best.valid || f < best.f) best = {g, b, f, true};
    };
    admit(pg, pb, prev_c3);
    for (int k = 1; k <= n_arc; ++k) {
      const double t = t_lo + (t_hi - t_lo) * k / n_arc;
      auto [g, b] = point_at(t);
      const double c3v = current_constraint_residual(g, b, s);
      admit(g, b, c3v);
      if ((prev_c3 < 0.0) != (c3v < 0.0)) {
        double lo = prev_t, hi = t;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          auto [mg, mb] = point_at(mid);
          if ((current_constraint_residual(mg, mb, s) < 0.0) == (prev_c3 < 0.0))
            lo = mid;
          else
            hi = mid;
        }
        // evaluate just inside the feasible side of the crossing
        const double t_in = (prev_c3 < 0.0) ? lo : hi;
        auto [rg, rb] = point_at(t_in);
        admit(rg, rb, current_constraint_residual(rg, rb, s));
      }
      prev_t = t;
      prev_c3 = c3v;
    }
  };
  if (s.bounds.r_v_min > 0.0) {
    const double c = 0.5 / s.bounds.r_v_min;
    circle_roots(
        [c](double t) { return std::pair{c * (1.0 + std::cos(t)), c * std::sin(t)}; },
        -kPi + 1e-9, -1e-9);
  }
  if (s.bounds.l_v_min > 0.0) {
    const double c = 0.5 / (s.omega_n * s.bounds.l_v_min);
    circle_roots(
        [c](double t) { return std::pair{c * std::sin(t), c * (std::cos(t) - 1.0)}; },
        1e-9, kPi - 1e-9);
  }
  if (s.bounds.r_v_min > 0.0 && s.bounds.l_v_min > 0.0) {
    const Admittance2 y = rl_to_admittance({s.bounds.r_v_min, s.bounds.l_v_min}, s.omega_n);
    const double g = y.g * (1.0 - 1e-12);
    const double b = y.b * (1.0 - 1e-12);
    if (feasible(g, b)) {
      const double f = objective_term(g, b, s);
      if (f < best.f) best = {g, b, f, true};
    }
  }

  SubproblemResult out;
  out.g = best.g;
  out.b = best.b;
  out.gains = gains_from_admittance(best.g, best.b, s.omega_n, &out.zero_admittance);
  out.objective = best.f;
  out.feasible = true;
  return out;
}

GainUpdate secondary_iteration(const NetworkModel& net, const MeasurementSnapshot& snap,
                               const WeightConfig& w, const GainBounds& bounds,
                               const std::vector<double>& i_max_per_dg,
                               const IterationOptions& opt) {
  validate_snapshot(net, snap);
  const auto violations = validate_weights(w, net);
  if (!violations.empty()) throw Error("secondary_iteration: invalid weights: " + violations[0]);
  if (static_cast<int>(i_max_per_dg.size()) != net.dg_count())
    throw Error("secondary_iteration: i_max per converter required");

  const double v_floor =
      opt.v_floor > 0.0 ? opt.v_floor : 0.1 * net.base().v_d_nom();

  GainUpdate up;
  const int d = net.dg_count();
  up.gains.resize(d);
  up.admittances.resize(d);
  up.zero_admittance.assign(d, false);
  up.diagnostics.assign(d, "");
  up.objective_terms.assign(d, 0.0);
  up.max_gain_delta = 0.0;

  for (int dg = 0; dg < d; ++dg) {
    const int node = net.dg_node(dg);
    if (!snap.vac_active[dg]) {
      up.gains[dg] = snap.gains_now[dg];
      up.admittances[dg] = {0.0, 0.0};
      up.zero_admittance[dg] = true;
      up.diagnostics[dg] = "virtual admittance inactive; gains unchanged";
      continue;
    }
    SubproblemSpec spec = build_subproblem(net, snap, dg, w.a[node], w.b[dg], bounds,
                                           i_max_per_dg[dg], v_floor);
    SolveTuning tuning = opt.tuning;
    try {
      const Admittance2 y_now = snap.gains_now[dg].admittance(net.base().omega_n());
      tuning.extra_candidates.push_back({y_now.g, y_now.b});
      tuning.warm_start = true;
      tuning.warm_g = y_now.g;
      tuning.warm_b = y_now.b;
    } catch (const Error&) {
      // degenerate current gains: no continuation seed
    }
    SubproblemResult res;
    try {
      res = solve_subproblem(spec, tuning);
    } catch (const Error& e) {
      up.gains[dg] = snap.gains_now[dg];
      up.admittances[dg] = {0.0, 0.0};
      up.diagnostics[dg] = e.what();
      up.max_gain_delta = kInf;
      continue;
    }
    if (res.unchanged) {
      // bit-exact repetition of the previous command
      up.gains[dg] = snap.gains_now[dg];
      up.admittances[dg] = {res.g, res.b};
      up.objective_terms[dg] = res.objective;
      up.diagnostics[dg] = res.diagnostic;
      continue;
    }
    up.gains[dg] = res.gains;
    up.admittances[dg] = {res.g, res.b};
    up.zero_admittance[dg] = res.zero_admittance;
    up.objective_terms[dg] = res.objective;
    if (!res.feasible) up.diagnostics[dg] = res.diagnostic;

    double delta;
    if (res.zero_admittance)
      delta = snap.gains_now[dg].r_v >= kOpenBranchR ? 0.0 : kInf;
    else
      delta = std::max(std::fabs(res.gains.r_v - snap.gains_now[dg].r_v),
                       std::fabs(res.gains.l_v - snap.gains_now[dg].l_v));
    up.max_gain_delta = std::max(up.max_gain_delta, delta);
  }

  // Full objective and per-node terms with all new gains applied.
  up.per_node_terms.assign(net.node_count(), 0.0);
  const double v_nom = net.base().v_d_nom();
  double total = 0.0;
  for (int j = 0; j < net.node_count(); ++j) {
    double dev;
    const auto dg = net.dg_at(j);
    if (dg && snap.vac_active[*dg]) {
      SubproblemSpec spec = build_subproblem(net, snap, *dg, w.a[j], w.b[*dg], bounds,
                                             i_max_per_dg[*dg], v_floor);
      const Admittance2& y = up.admittances[*dg];
      dev = v_nom - predicted_node_voltage(y.g, y.b, spec).magnitude();
      const DqVec i_v = predicted_virtual_current(y.g, y.b, spec);
      total += w.b[*dg] * (i_v.d * i_v.d + i_v.q * i_v.q);
    } else {
      dev = v_nom - snap.v_hat[j].magnitude();
    }
    up.per_node_terms[j] = w.a[j] * dev * dev;
    total += up.per_node_terms[j];
  }
  up.objective_value = total;
  up.converged = up.max_gain_delta < opt.eps_fix;
  return up;
}

double objective_value(const NetworkModel& net, const MeasurementSnapshot& snap,
                       const WeightConfig& w, const GainBounds& bounds,
                       const std::vector<Admittance2>& gains, double v_floor_in) {
  validate_snapshot(net, snap);
  if (static_cast<int>(gains.size()) != net.dg_count())
    throw Error("objective_value: one admittance per converter required");
  const double v_floor = v_floor_in > 0.0 ? v_floor_in : 0.1 * net.base().v_d_nom();
  const double v_nom = net.base().v_d_nom();
  double total = 0.0;
  for (int j = 0; j < net.node_count(); ++j) {
    const auto dg = net.dg_at(j);
    double dev;
    if (dg && snap.vac_active[*dg]) {
      SubproblemSpec spec =
          build_subproblem(net, snap, *dg, w.a[j], w.b[*dg], bounds, 1e30, v_floor);
      dev = v_nom - predicted_node_voltage(gains[*dg].g, gains[*dg].b, spec).magnitude();
      const DqVec i_v = predicted_virtual_current(gains[*dg].g, gains[*dg].b, spec);
      total += w.b[*dg] * (i_v.d * i_v.d + i_v.q * i_v.q);
    } else {
      dev = v_nom - snap.v_hat[j].magnitude();
    }
    total += w.a[j] * dev * dev;
  }
  return total;
}

}  // namespace vac
