#pragma once

#include <string>

#include "fhn/config.hpp"

namespace fhn {

struct SimulationResult {
  bool ok = false;
  std::string failure;
  StepTelemetry telemetry;
  long steps = 0;
};

// Single-epsilon run in the configured solver mode. Writes
// <dir>/trajectory.csv (t, x, V, W, V_limit, W_limit at the sample times) and
// checkpoints every solver.checkpoint_every steps when positive.
SimulationResult run_simulation(const RunConfig& cfg, const std::string& dir);

}  // namespace fhn
