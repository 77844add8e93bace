#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vac/converter.hpp"
#include "vac/network.hpp"
#include "vac/secondary.hpp"

namespace vac {

enum class SimMode { QuasiStatic, RmsDynamic };
enum class VacForm { QuasiStatic, Dynamic };

struct EventSpec {
  enum class Kind { LoadStep, GridVoltageStep, EnableVac, SetWeights, SetSetpoint };
  double at = 0.0;
  Kind kind = Kind::LoadStep;
  // LoadStep
  NodeId node;
  double delta_p = 0.0;  // W
  // GridVoltageStep
  double fraction = 0.0;
  // EnableVac / SetSetpoint
  ConverterId converter;
  double p_ref = 0.0;  // W
  double q_ref = 0.0;  // var
  // SetWeights
  WeightConfig weights;
};

struct ConverterSpec {
  ConverterId id;
  NodeId node;
  ConverterParams params;
  Setpoints setpoints;
  VacGains initial_gains;
  bool vac_enabled = true;
  VacForm vac_form = VacForm::QuasiStatic;
  std::optional<DroopConfig> droop;  // replaces the VAC when set
};

struct LoadSpecNamed {
  NodeId node;
  LoadSpec load;
};

struct SecondaryConfig {
  bool enabled = false;
  double period = 4.0;
  double first_at = 3.0;
  double comm_delay = 0.1;
  // scheduler overrides; negative selects the library default
  double freeze_tol = -1.0;
  double proximal_weight = -1.0;
  // supervisory rollback of updates whose measured effect is a worse profile
  bool supervision = true;
};

struct SimConfig {
  double dt = 0.05;
  double t_end = 20.0;
  SimMode mode = SimMode::QuasiStatic;
};

struct GridSourceSpec {
  NodeId node;
  RLParams tie;   // ohm, henry
  double v_pu = 1.0;
};

struct Scenario {
  std::string name;
  PerUnitBase base;
  std::vector<NodeId> nodes;
  struct LineSpec {
    NodeId from, to;
    RLParams rl;
  };
  std::vector<LineSpec> lines;
  GridSourceSpec grid;
  std::vector<LoadSpecNamed> loads;
  std::vector<ConverterSpec> converters;
  WeightConfig weights;  // keyed by node/converter order below
  GainBounds bounds;
  SecondaryConfig secondary;
  std::vector<EventSpec> events;
  SimConfig sim;
  std::uint64_t seed = 1;

  // Instantiates the immutable topology with loads and converters attached;
  // converter order follows the converters vector.
  NetworkModel build_network() const;
};

// Parses and fully validates a scenario file; throws Error with the offending
// field on schema violations.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& origin = "scenario");

// Cross-field validation (weights rule, topology connectivity, event order,
// positive timing); returns human-readable problems, empty when valid.
std::vector<std::string> validate_scenario(const Scenario& s);

}  // namespace vac
