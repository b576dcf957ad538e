#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "carbonmfg/regulator.hpp"
#include "carbonmfg/simulate.hpp"

namespace carbonmfg {

struct SimSettings {
  SimConfig sim;  // n_paths drives the cost and mean-field certificates
  std::int64_t deviation_paths = 10000;
  std::int64_t costate_paths = 10000;
  DeviationSettings deviation;
};

// Everything a run needs. Producer rates quoted per time step in the file
// (p1, rho0, rho1) are divided by the grid step on load.
struct ScenarioConfig {
  double horizon = 0.0;
  int n_steps = 0;
  ProducerParams producer;
  RegulatorParams regulator;
  RegulatorPolicy policy;
  SolverSettings solver;
  SimSettings sim;
  std::string output_dir = "out";

  num::TimeGrid grid() const { return num::TimeGrid(horizon, n_steps); }
};

// Throws SolverError(kConfig) on syntax errors, unknown keys, missing
// mandatory keys, wrong types and failed validation.
ScenarioConfig parse_config(std::string_view text, std::string_view source = "config");

// Throws kIO when the file cannot be read, kConfig otherwise.
ScenarioConfig load_config(const std::string& path);

// Canonical serialization of the numeric content (sorted keys, shortest
// round-trip numbers). The output directory is not part of it.
std::string canonical_config(const ScenarioConfig& cfg);

// SHA-256 of canonical_config, lowercase hex.
std::string config_hash(const ScenarioConfig& cfg);

}  // namespace carbonmfg
