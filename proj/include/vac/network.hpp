#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vac/dq.hpp"

namespace vac {

using NodeId = std::string;
using ConverterId = std::string;

// Lumped load attached to a node. Constant-power loads are converted to a
// current at the locally solved (or measured) voltage; constant-current loads
// hold their dq components in the node's local frame.
struct LoadSpec {
  enum class Kind { ConstantPower, ConstantCurrent };

  Kind kind = Kind::ConstantPower;
  double p = 0.0;  // W drawn
  double q = 0.0;  // var drawn
  DqVec i{};       // A, local frame (ConstantCurrent only)

  static LoadSpec constant_power(double p_w, double q_var) {
    LoadSpec l;
    l.kind = Kind::ConstantPower;
    l.p = p_w;
    l.q = q_var;
    return l;
  }
  static LoadSpec constant_current(const DqVec& i_local) {
    LoadSpec l;
    l.kind = Kind::ConstantCurrent;
    l.i = i_local;
    return l;
  }
};

struct Line {
  int from = 0;
  int to = 0;
  Admittance2 y{};
};

// Ideal voltage source behind a tie admittance, attached to exactly one node.
struct GridSource {
  int node = 0;
  DqVec v{};
  Admittance2 y_g{};
};

// Grid topology. Immutable graph structure; loads, source voltage and
// setpoint-style data may be updated between solves by the orchestrator.
class NetworkModel {
 public:
  NetworkModel(PerUnitBase base, std::vector<NodeId> nodes, std::vector<Line> lines,
               GridSource source);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int line_count() const { return static_cast<int>(lines_.size()); }
  int dg_count() const { return static_cast<int>(dg_nodes_.size()); }

  int node_index(const NodeId& id) const;
  const NodeId& node_name(int i) const { return nodes_.at(i); }
  const std::vector<Line>& lines() const { return lines_; }
  const GridSource& source() const { return source_; }
  GridSource& source() { return source_; }
  const PerUnitBase& base() const { return base_; }

  void set_load(int node, const LoadSpec& load) { loads_.at(node) = load; }
  void clear_load(int node) { loads_.at(node).reset(); }
  const std::optional<LoadSpec>& load(int node) const { return loads_.at(node); }

  // Registers a converter at a node (at most one per node); returns its index.
  int attach_dg(int node, const ConverterId& id);
  int dg_node(int dg) const { return dg_nodes_.at(dg); }
  const ConverterId& dg_name(int dg) const { return dg_names_.at(dg); }
  std::optional<int> dg_at(int node) const;
  int dg_index(const ConverterId& id) const;

  // Neighbours of a node through lines: (other node, line admittance, line index).
  struct Neighbor {
    int node;
    Admittance2 y;
    int line;
  };
  const std::vector<Neighbor>& neighbors(int node) const { return adjacency_.at(node); }

  // Throws with a diagnostic when the graph is disconnected, a line admittance
  // is singular, or the source node is invalid.
  void validate() const;

 private:
  PerUnitBase base_;
  std::vector<NodeId> nodes_;
  std::vector<Line> lines_;
  GridSource source_;
  std::vector<std::optional<LoadSpec>> loads_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<int> dg_nodes_;
  std::vector<ConverterId> dg_names_;
};

struct NetworkSolution {
  std::vector<DqVec> v;       // per node, common frame
  std::vector<DqVec> i_line;  // per line, from -> to, common frame
  std::vector<DqVec> i_conv;  // per converter, common frame
  bool converged = false;
  int iterations = 0;
  double worst_residual_pu = 0.0;
};

// Converter injection (common frame) as a function of its node voltage.
using InjectionFn = std::function<DqVec(int dg, const DqVec& v_node)>;

struct SolveOptions {
  double tol_pu = 1e-9;
  int max_iterations = 100;
  double v_floor_pu = 0.1;  // constant-power evaluation floor
  const std::vector<DqVec>* warm_start = nullptr;
};

// Load current drawn at voltage v (common frame). Constant-power loads are
// evaluated at a floored magnitude to keep the current defined during solves.
DqVec load_current(const LoadSpec& load, const DqVec& v, double v_floor_abs);

// Single-node voltage from its neighbours and injections:
//   v_j = (sum Y)^-1 (i_c - i_l + sum Y_i v_i).
DqVec node_voltage_solve(const std::vector<DqVec>& neighbor_v, const DqVec& i_c,
                         const DqVec& i_l, const std::vector<Admittance2>& lines);

// Solves the full network for the simultaneous fixed point where every node
// satisfies KCL with converter injections evaluated at the solved voltages.
// Damped Newton on the stacked residual, with a source-homotopy retry and a
// Gauss-Seidel fixed-point fallback.
NetworkSolution quasi_static_solve(const NetworkModel& net, const InjectionFn& inject,
                                   const SolveOptions& opt = {});

// Per-node KCL residual magnitude in pu of the network current base.
std::vector<double> kcl_residual(const NetworkModel& net, const NetworkSolution& sol,
                                 const InjectionFn& inject,
                                 double v_floor_pu = 0.1);

}  // namespace vac
