#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fhn/harness.hpp"
#include "json.hpp"

namespace fhn {

struct OutputSpec {
  std::string dir = "runs";
  bool diagnostics = true;  // per-node diagnostics CSVs
};

struct RunConfig {
  ExperimentSpec experiment;
  double simulate_epsilon = 0.05;  // solver.epsilon, used by `simulate`
  OutputSpec output;
};

// Effective configuration as JSON (all keys, defaults filled).
nlohmann::ordered_json to_json(const RunConfig& cfg);

// Validates keys and types against the schema, fills defaults, checks
// invariants. Throws ConfigError carrying the offending field path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// (dotted key, default value) for every leaf of the schema.
std::vector<std::pair<std::string, std::string>> config_keys();

WeightVariant weight_variant_from_string(const std::string& s);

}  // namespace fhn
