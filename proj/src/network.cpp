#include "vac/network.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <queue>

namespace vac {

namespace {

using Cplx = std::complex<double>;

Cplx cpx(const DqVec& v) { return to_complex(v); }

}  // namespace

NetworkModel::NetworkModel(PerUnitBase base, std::vector<NodeId> nodes,
                           std::vector<Line> lines, GridSource source)
    : base_(base),
      nodes_(std::move(nodes)),
      lines_(std::move(lines)),
      source_(source),
      loads_(nodes_.size()),
      adjacency_(nodes_.size()) {
  for (int li = 0; li < static_cast<int>(lines_.size()); ++li) {
    const Line& l = lines_[li];
    if (l.from < 0 || l.from >= node_count() || l.to < 0 || l.to >= node_count() ||
        l.from == l.to)
      throw Error("NetworkModel: line " + std::to_string(li) + " has invalid endpoints");
    adjacency_[l.from].push_back({l.to, l.y, li});
    adjacency_[l.to].push_back({l.from, l.y, li});
  }
  if (source_.node < 0 || source_.node >= node_count())
    throw Error("NetworkModel: grid source node out of range");
}

int NetworkModel::node_index(const NodeId& id) const {
  for (int i = 0; i < node_count(); ++i)
    if (nodes_[i] == id) return i;
  throw Error("NetworkModel: unknown node '" + id + "'");
}

int NetworkModel::attach_dg(int node, const ConverterId& id) {
  if (node < 0 || node >= node_count()) throw Error("attach_dg: node out of range");
  if (dg_at(node)) throw Error("attach_dg: node '" + nodes_[node] + "' already hosts a converter");
  dg_nodes_.push_back(node);
  dg_names_.push_back(id);
  return dg_count() - 1;
}

std::optional<int> NetworkModel::dg_at(int node) const {
  for (int i = 0; i < dg_count(); ++i)
    if (dg_nodes_[i] == node) return i;
  return std::nullopt;
}

int NetworkModel::dg_index(const ConverterId& id) const {
  for (int i = 0; i < dg_count(); ++i)
    if (dg_names_[i] == id) return i;
  throw Error("NetworkModel: unknown converter '" + id + "'");
}

void NetworkModel::validate() const {
  for (int li = 0; li < line_count(); ++li)
    if (lines_[li].y.norm2() <= 0.0)
      throw Error("NetworkModel: line " + std::to_string(li) + " has singular admittance");
  if (source_.y_g.norm2() <= 0.0) throw Error("NetworkModel: grid tie admittance is singular");

  // Connectivity over lines.
  std::vector<bool> seen(node_count(), false);
  std::queue<int> work;
  work.push(source_.node);
  seen[source_.node] = true;
  while (!work.empty()) {
    int n = work.front();
    work.pop();
    for (const Neighbor& nb : adjacency_[n]) {
      if (!seen[nb.node]) {
        seen[nb.node] = true;
        work.push(nb.node);
      }
    }
  }
  for (int i = 0; i < node_count(); ++i)
    if (!seen[i])
      throw Error("NetworkModel: node '" + nodes_[i] + "' is not connected to the grid source");
}

DqVec load_current(const LoadSpec& load, const DqVec& v, double v_floor_abs) {
  if (load.kind == LoadSpec::Kind::ConstantCurrent) {
    const double ang = std::atan2(v.q, v.d);
    return rotate(load.i, FrameAngle{ang});
  }
  // s = 3/2 v conj(i)  =>  i = (2/3) (p - jq) v / |v|^2
  Cplx vc = cpx(v);
  double mag = std::abs(vc);
  if (mag < v_floor_abs) {
    // Keep the residual defined for collapsed iterates; the solver reports
    // non-convergence if the final solution sits below the floor.
    vc = (mag > 0.0) ? vc * (v_floor_abs / mag) : Cplx(v_floor_abs, 0.0);
    mag = v_floor_abs;
  }
  const Cplx s(load.p, load.q);
  const Cplx i = (2.0 / 3.0) * std::conj(s) * vc / (mag * mag);
  return from_complex(i);
}

DqVec node_voltage_solve(const std::vector<DqVec>& neighbor_v, const DqVec& i_c,
                         const DqVec& i_l, const std::vector<Admittance2>& lines) {
  if (neighbor_v.size() != lines.size())
    throw Error("node_voltage_solve: neighbour/line count mismatch");
  Cplx y_sum(0.0, 0.0);
  Cplx rhs = cpx(i_c) - cpx(i_l);
  for (size_t k = 0; k < lines.size(); ++k) {
    const Cplx y = to_complex(lines[k]);
    y_sum += y;
    rhs += y * cpx(neighbor_v[k]);
  }
  if (std::norm(y_sum) <= 0.0) throw Error("node_voltage_solve: singular admittance sum");
  return from_complex(rhs / y_sum);
}

namespace {

// Stacked KCL residual, one complex entry per node:
//   F_j = sum_k Y_jk (v_k - v_j) + [source tie] + i_c_j(v_j) - i_l_j(v_j)
// inj_scale/load_scale support the homotopy retry.
void residual(const NetworkModel& net, const std::vector<Cplx>& v, const InjectionFn& inject,
              double v_floor_abs, double scale, std::vector<Cplx>& out) {
  const int n = net.node_count();
  out.assign(n, Cplx(0.0, 0.0));
  for (int j = 0; j < n; ++j) {
    Cplx f(0.0, 0.0);
    for (const NetworkModel::Neighbor& nb : net.neighbors(j))
      f += to_complex(nb.y) * (v[nb.node] - v[j]);
    if (net.source().node == j)
      f += to_complex(net.source().y_g) * (cpx(net.source().v) - v[j]);
    if (auto dg = net.dg_at(j))
      f += scale * cpx(inject(*dg, from_complex(v[j])));
    if (net.load(j))
      f -= scale * cpx(load_current(*net.load(j), from_complex(v[j]), v_floor_abs));
    out[j] = f;
  }
}

double max_abs(const std::vector<Cplx>& f) {
  double m = 0.0;
  for (const Cplx& c : f) m = std::max(m, std::abs(c));
  return m;
}

// Dense Gaussian elimination with partial pivoting; a is n x n row-major.
bool gauss_solve(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    if (std::fabs(a[piv * n + col]) < 1e-13) return false;
    if (piv != col) {
      for (int c = col; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    const double d = a[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double m = a[r * n + col] / d;
      if (m == 0.0) continue;
      for (int c = col; c < n; ++c) a[r * n + c] -= m * a[col * n + c];
      b[r] -= m * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r * n + c] * b[c];
    b[r] = s / a[r * n + r];
  }
  return true;
}

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double worst = 0.0;
};

NewtonOutcome newton(const NetworkModel& net, std::vector<Cplx>& v, const InjectionFn& inject,
                     double v_floor_abs, double scale, double tol_abs, int max_iter) {
  const int n = net.node_count();
  const int m = 2 * n;
  std::vector<Cplx> f, f_try, f_pert;
  std::vector<double> jac(m * m), step(m);
  std::vector<Cplx> v_try(n), v_pert(n);
  const double h = 1e-5 * net.base().v_d_nom();

  residual(net, v, inject, v_floor_abs, scale, f);
  NewtonOutcome out;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    out.worst = max_abs(f);
    if (out.worst < tol_abs) {
      out.converged = true;
      return out;
    }
    // Forward-difference Jacobian, column per unknown (d then q of each node).
    for (int k = 0; k < m; ++k) {
      v_pert = v;
      if (k % 2 == 0)
        v_pert[k / 2] += Cplx(h, 0.0);
      else
        v_pert[k / 2] += Cplx(0.0, h);
      residual(net, v_pert, inject, v_floor_abs, scale, f_pert);
      for (int j = 0; j < n; ++j) {
        jac[(2 * j) * m + k] = (f_pert[j].real() - f[j].real()) / h;
        jac[(2 * j + 1) * m + k] = (f_pert[j].imag() - f[j].imag()) / h;
      }
    }
    for (int j = 0; j < n; ++j) {
      step[2 * j] = -f[j].real();
      step[2 * j + 1] = -f[j].imag();
    }
    std::vector<double> jac_copy = jac;
    if (!gauss_solve(jac_copy, step, m)) throw Error("quasi_static_solve: singular Jacobian");

    // Backtracking line search on the residual norm.
    const double f0 = max_abs(f);
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1.0 / 1024.0) {
      for (int j = 0; j < n; ++j)
        v_try[j] = v[j] + alpha * Cplx(step[2 * j], step[2 * j + 1]);
      residual(net, v_try, inject, v_floor_abs, scale, f_try);
      if (max_abs(f_try) < f0 * (1.0 - 1e-4 * alpha)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return out;  // stalled; caller falls back
    v = v_try;
    f = f_try;
  }
  out.worst = max_abs(f);
  out.converged = out.worst < tol_abs;
  return out;
}

// Dense complex Gaussian elimination with partial pivoting.
bool gauss_solve_cplx(std::vector<Cplx>& a, std::vector<Cplx>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-13) return false;
    if (piv != col) {
      for (int c = col; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      const Cplx m = a[r * n + col] / a[col * n + col];
      if (m == Cplx(0.0, 0.0)) continue;
      for (int c = col; c < n; ++c) a[r * n + c] -= m * a[col * n + c];
      b[r] -= m * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    Cplx s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r * n + c] * b[c];
    b[r] = s / a[r * n + r];
  }
  return true;
}

// Fixed point with the converters' incremental admittances absorbed into the
// nodal matrix and only the weak nonlinear remainder (loads, frame rotation,
// saturation defect) lagged on the right-hand side. Robust where plain Newton
// chatters on the current-limiter corner, since the stiff linear part is
// solved implicitly. The local slopes are probed numerically per refresh.
NewtonOutcome defect_iteration(const NetworkModel& net, std::vector<Cplx>& v,
                               const InjectionFn& inject, double v_floor_abs, double scale,
                               double tol_abs, int max_sweeps) {
  const int n = net.node_count();
  const double h = 1e-3 * net.base().v_d_nom();
  std::vector<Cplx> y_conv(n, Cplx(0.0, 0.0));  // per node, zero without converter
  std::vector<Cplx> m(n * n), rhs(n), f;

  NewtonOutcome out;
  for (out.iterations = 0; out.iterations < max_sweeps; ++out.iterations) {
    if (out.iterations % 8 == 0) {
      // refresh the probed converter slopes: y ~ -di_c/dv
      for (int j = 0; j < n; ++j) {
        auto dg = net.dg_at(j);
        if (!dg) continue;
        const Cplx i0 = cpx(inject(*dg, from_complex(v[j])));
        const Cplx i_d = cpx(inject(*dg, from_complex(v[j] + Cplx(h, 0.0))));
        const Cplx i_q = cpx(inject(*dg, from_complex(v[j] + Cplx(0.0, h))));
        Cplx y = -0.5 * ((i_d - i0) / h + (i_q - i0) / Cplx(0.0, h));
        if (!std::isfinite(y.real()) || !std::isfinite(y.imag())) y = Cplx(0.0, 0.0);
        y = Cplx(std::clamp(y.real(), 0.0, 100.0), std::clamp(y.imag(), -100.0, 100.0));
        y_conv[j] = scale * y;
      }
    }
    // assemble M v = -(source term + lagged defect - lagged load)
    std::fill(m.begin(), m.end(), Cplx(0.0, 0.0));
    for (int j = 0; j < n; ++j) {
      Cplx diag(0.0, 0.0);
      for (const NetworkModel::Neighbor& nb : net.neighbors(j)) {
        const Cplx y = to_complex(nb.y);
        diag += y;
        m[j * n + nb.node] += y;
      }
      if (net.source().node == j) diag += to_complex(net.source().y_g);
      diag += y_conv[j];
      m[j * n + j] = -diag;
      Cplx b(0.0, 0.0);
      if (net.source().node == j) b += to_complex(net.source().y_g) * cpx(net.source().v);
      if (auto dg = net.dg_at(j))
        b += scale * cpx(inject(*dg, from_complex(v[j]))) + y_conv[j] * v[j];
      if (net.load(j))
        b -= scale * cpx(load_current(*net.load(j), from_complex(v[j]), v_floor_abs));
      rhs[j] = -b;
    }
    std::vector<Cplx> m_lu = m;
    std::vector<Cplx> v_new = rhs;
    if (!gauss_solve_cplx(m_lu, v_new, n))
      throw Error("quasi_static_solve: singular admittance sum");
    const double beta = 0.85;
    for (int j = 0; j < n; ++j) v[j] += beta * (v_new[j] - v[j]);

    residual(net, v, inject, v_floor_abs, scale, f);
    out.worst = max_abs(f);
    if (out.worst < tol_abs) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace

NetworkSolution quasi_static_solve(const NetworkModel& net, const InjectionFn& inject,
                                   const SolveOptions& opt) {
  net.validate();
  const int n = net.node_count();
  const double v_floor_abs = opt.v_floor_pu * net.base().v_d_nom();
  const double tol_abs = opt.tol_pu * net.base().i_base();

  std::vector<Cplx> v(n, cpx(net.source().v));
  if (opt.warm_start && static_cast<int>(opt.warm_start->size()) == n)
    for (int j = 0; j < n; ++j) v[j] = cpx((*opt.warm_start)[j]);

  NewtonOutcome res = newton(net, v, inject, v_floor_abs, 1.0, tol_abs, opt.max_iterations);
  int total_iters = res.iterations;

  if (!res.converged) {
    // implicit-admittance fixed point, then a Newton polish from its basin
    NewtonOutcome fp = defect_iteration(net, v, inject, v_floor_abs, 1.0, tol_abs, 400);
    total_iters += fp.iterations;
    res = fp;
    if (!fp.converged) {
      NewtonOutcome r = newton(net, v, inject, v_floor_abs, 1.0, tol_abs, opt.max_iterations);
      total_iters += r.iterations;
      res = r;
    }
  }
  if (!res.converged) {
    // homotopy on load/injection level, chaining warm starts
    std::vector<Cplx> vh(n, cpx(net.source().v));
    bool ok = true;
    for (double scale : {0.25, 0.5, 0.75, 1.0}) {
      NewtonOutcome r = newton(net, vh, inject, v_floor_abs, scale, tol_abs, opt.max_iterations);
      total_iters += r.iterations;
      if (!r.converged) {
        r = defect_iteration(net, vh, inject, v_floor_abs, scale, tol_abs, 400);
        total_iters += r.iterations;
      }
      if (scale == 1.0 && r.converged) res = r;
      ok = r.converged;
      if (!ok) break;
    }
    if (ok) v = vh;
  }

  NetworkSolution sol;
  sol.v.resize(n);
  for (int j = 0; j < n; ++j) sol.v[j] = from_complex(v[j]);
  sol.converged = res.converged;
  sol.iterations = total_iters;
  sol.worst_residual_pu = res.worst / net.base().i_base();

  if (sol.converged) {
    for (int j = 0; j < n; ++j)
      if (sol.v[j].magnitude() < v_floor_abs) {
        sol.converged = false;  // voltage collapse: constant-power floor active
        break;
      }
  }
  if (!sol.converged)
    throw Error("quasi_static_solve: no convergence after " + std::to_string(total_iters) +
                " iterations (worst residual " + std::to_string(sol.worst_residual_pu) + " pu)");

  sol.i_line.resize(net.line_count());
  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.lines()[li];
    sol.i_line[li] = adm_apply(l.y, sol.v[l.from] - sol.v[l.to]);
  }
  sol.i_conv.resize(net.dg_count());
  for (int dg = 0; dg < net.dg_count(); ++dg) sol.i_conv[dg] = inject(dg, sol.v[net.dg_node(dg)]);
  return sol;
}

std::vector<double> kcl_residual(const NetworkModel& net, const NetworkSolution& sol,
                                 const InjectionFn& inject, double v_floor_pu) {
  const int n = net.node_count();
  if (static_cast<int>(sol.v.size()) != n) throw Error("kcl_residual: solution size mismatch");
  std::vector<Cplx> v(n), f;
  for (int j = 0; j < n; ++j) v[j] = cpx(sol.v[j]);
  residual(net, v, inject, v_floor_pu * net.base().v_d_nom(), 1.0, f);
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) out[j] = std::abs(f[j]) / net.base().i_base();
  return out;
}

}  // namespace vac
