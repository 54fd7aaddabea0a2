#include "fhn/config.hpp"

#include <fstream>
#include <sstream>

#include "fhn/errors.hpp"

namespace fhn {

using nlohmann::json;
using nlohmann::ordered_json;

WeightVariant weight_variant_from_string(const std::string& s) {
  for (auto v : {WeightVariant::m_eps, WeightVariant::m_minus, WeightVariant::m_plus, WeightVariant::bar_m,
                 WeightVariant::bar_m_minus, WeightVariant::bar_m_plus})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown weight variant '" + s + "'");
}

ordered_json to_json(const RunConfig& cfg) {
  const ExperimentSpec& e = cfg.experiment;
  const ModelConfig& m = e.model;
  ordered_json j;
  j["model"] = {
      {"drift", {{"coefficients", m.drift.coefficients}, {"growth_exponent_p", m.drift.growth_exponent_p}}},
      {"adaptation", {{"a", m.adaptation.a}, {"b", m.adaptation.b}, {"c", m.adaptation.c}}},
      {"kernel",
       {{"kind", to_string(m.kernel.kind)},
        {"parameters", m.kernel.parameters},
        {"exponent_r", m.kernel.exponent_r},
        {"table", m.kernel.table}}},
      {"rho0", {{"kind", m.rho0_kind}, {"base", m.rho0_base}, {"amplitude", m.rho0_amplitude}}},
      {"m_star", m.m_star},
      {"V0", {{"base", m.V0_base}, {"amplitude", m.V0_amplitude}}},
      {"W0", m.W0},
  };
  j["grids"] = {{"nx", e.grid.nx}, {"nv", e.grid.nv}, {"nw", e.grid.nw}, {"Lv", e.grid.Lv}, {"Lw", e.grid.Lw}};
  j["solver"] = {{"dt", e.solver.dt},
                 {"t_end", e.solver.t_end},
                 {"cfl_safety", e.solver.cfl_safety},
                 {"mode", to_string(e.solver.mode)},
                 {"transport", to_string(e.solver.transport)},
                 {"checkpoint_every", e.solver.checkpoint_every},
                 {"recenter_tol", e.solver.recenter_tol},
                 {"epsilon", cfg.simulate_epsilon}};
  j["weights"] = {{"kappa", e.weight.kappa}, {"variant", to_string(e.weight.variant)}};
  const Tolerances& t = e.tol;
  j["experiment"] = {
      {"epsilons", e.epsilons},
      {"initial_data", to_string(e.initial_data)},
      {"w_variance", e.w_variance},
      {"n_geometric", e.n_geometric},
      {"geometric_t_max", e.geometric_t_max},
      {"n_uniform", e.n_uniform},
      {"alpha_star", e.alpha_star},
      {"seed", e.seed},
      {"random_pairs", e.random_pairs},
      {"monitor_shifts", e.monitor_shifts},
      {"equicontinuity_max_shift", e.equicontinuity_max_shift},
      {"floor_estimate", e.floor_estimate},
      {"threads", e.threads},
      {"cross_validation",
       {{"enabled", e.cross.enabled},
        {"epsilon", e.cross.epsilon},
        {"t", e.cross.t},
        {"dt", e.cross.dt},
        {"nv", e.cross.nv},
        {"nw", e.cross.nw},
        {"Lv", e.cross.Lv},
        {"Lw", e.cross.Lw},
        {"tolerance", e.cross.tolerance}}},
      {"oracle",
       {{"enabled", e.oracle.enabled}, {"refinement", e.oracle.refinement}, {"tolerance", e.oracle.tolerance}}},
      {"tolerances",
       {{"l1_slope_min", t.l1_slope_min},
        {"l1_slope_max", t.l1_slope_max},
        {"marginal_slope_min", t.marginal_slope_min},
        {"marginal_slope_max", t.marginal_slope_max},
        {"r2_min", t.r2_min},
        {"envelope_margin", t.envelope_margin},
        {"ratio_variation_max", t.ratio_variation_max},
        {"monitor_scale", t.monitor_scale},
        {"mass_defect", t.mass_defect},
        {"theta_residual", t.theta_residual},
        {"fixed_point", t.fixed_point},
        {"sandwich_abs", t.sandwich_abs},
        {"lemma_bar_nu_rel", t.lemma_bar_nu_rel}}},
  };
  j["output"] = {{"dir", cfg.output.dir}, {"diagnostics", cfg.output.diagnostics}};
  return j;
}

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

const char* kind_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

void check_leaf(const json& schema, const json& in, const std::string& path) {
  if (schema.is_number_integer() || schema.is_number_unsigned()) {
    if (!in.is_number_integer()) throw ConfigError(path, std::string("expected integer, got ") + kind_name(in));
    if (schema.is_number_unsigned() && in.is_number_integer() && !in.is_number_unsigned() && in.get<long long>() < 0)
      throw ConfigError(path, "expected non-negative integer");
  } else if (schema.is_number()) {
    if (!in.is_number()) throw ConfigError(path, std::string("expected number, got ") + kind_name(in));
  } else if (schema.is_boolean()) {
    if (!in.is_boolean()) throw ConfigError(path, std::string("expected boolean, got ") + kind_name(in));
  } else if (schema.is_string()) {
    if (!in.is_string()) throw ConfigError(path, std::string("expected string, got ") + kind_name(in));
  } else if (schema.is_array()) {
    if (!in.is_array()) throw ConfigError(path, std::string("expected array, got ") + kind_name(in));
    const bool ints = !schema.empty() && schema.front().is_number_integer();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      if (ints ? !in[i].is_number_integer() : !in[i].is_number())
        throw ConfigError(p, ints ? "expected integer" : "expected number");
    }
  }
}

// Rejects unknown keys and type mismatches; returns schema with input values merged in.
json merge_checked(const json& schema, const json& in, const std::string& path) {
  if (!in.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected object");
  json out = schema;
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string p = join(path, it.key());
    if (!schema.contains(it.key())) throw ConfigError(p, "unknown key");
    const json& s = schema[it.key()];
    if (s.is_object())
      out[it.key()] = merge_checked(s, it.value(), p);
    else {
      check_leaf(s, it.value(), p);
      out[it.key()] = it.value();
    }
  }
  return out;
}

template <class T>
T get(const json& j, const std::string& path) {
  const json* cur = &j;
  std::string key;
  std::istringstream is(path);
  while (std::getline(is, key, '.')) cur = &cur->at(key);
  return cur->get<T>();
}

template <class F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

void flatten(const ordered_json& j, const std::string& path, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = join(path, it.key());
    if (it.value().is_object())
      flatten(it.value(), p, out);
    else
      out.emplace_back(p, it.value().dump());
  }
}

}  // namespace

RunConfig parse_config(const json& in) {
  const json schema = json::parse(to_json(RunConfig{}).dump());
  const json j = merge_checked(schema, in, "");

  RunConfig cfg;
  ExperimentSpec& e = cfg.experiment;
  ModelConfig& m = e.model;
  m.drift.coefficients = get<std::vector<double>>(j, "model.drift.coefficients");
  m.drift.growth_exponent_p = get<int>(j, "model.drift.growth_exponent_p");
  m.adaptation.a = get<double>(j, "model.adaptation.a");
  m.adaptation.b = get<double>(j, "model.adaptation.b");
  m.adaptation.c = get<double>(j, "model.adaptation.c");
  m.kernel.kind = with_path("model.kernel.kind",
                            [&] { return kernel_kind_from_string(get<std::string>(j, "model.kernel.kind")); });
  m.kernel.parameters = get<std::vector<double>>(j, "model.kernel.parameters");
  m.kernel.exponent_r = get<double>(j, "model.kernel.exponent_r");
  m.kernel.table = get<std::vector<double>>(j, "model.kernel.table");
  m.rho0_kind = get<std::string>(j, "model.rho0.kind");
  m.rho0_base = get<double>(j, "model.rho0.base");
  m.rho0_amplitude = get<double>(j, "model.rho0.amplitude");
  m.m_star = get<double>(j, "model.m_star");
  m.V0_base = get<double>(j, "model.V0.base");
  m.V0_amplitude = get<double>(j, "model.V0.amplitude");
  m.W0 = get<double>(j, "model.W0");

  e.grid.nx = get<int>(j, "grids.nx");
  e.grid.nv = get<int>(j, "grids.nv");
  e.grid.nw = get<int>(j, "grids.nw");
  e.grid.Lv = get<double>(j, "grids.Lv");
  e.grid.Lw = get<double>(j, "grids.Lw");

  e.solver.dt = get<double>(j, "solver.dt");
  e.solver.t_end = get<double>(j, "solver.t_end");
  e.solver.cfl_safety = get<double>(j, "solver.cfl_safety");
  e.solver.mode =
      with_path("solver.mode", [&] { return solver_mode_from_string(get<std::string>(j, "solver.mode")); });
  e.solver.transport = with_path(
      "solver.transport", [&] { return transport_scheme_from_string(get<std::string>(j, "solver.transport")); });
  e.solver.checkpoint_every = get<int>(j, "solver.checkpoint_every");
  e.solver.recenter_tol = get<double>(j, "solver.recenter_tol");
  cfg.simulate_epsilon = get<double>(j, "solver.epsilon");

  const bool kappa_given = in.contains("weights") && in["weights"].contains("kappa");
  e.weight.kappa = kappa_given ? get<double>(j, "weights.kappa") : 1.0 / m.adaptation.b;
  e.weight.variant = with_path("weights.variant",
                               [&] { return weight_variant_from_string(get<std::string>(j, "weights.variant")); });

  e.epsilons = get<std::vector<double>>(j, "experiment.epsilons");
  e.initial_data = with_path("experiment.initial_data", [&] {
    return initial_data_from_string(get<std::string>(j, "experiment.initial_data"));
  });
  e.w_variance = get<double>(j, "experiment.w_variance");
  e.n_geometric = get<int>(j, "experiment.n_geometric");
  e.geometric_t_max = get<double>(j, "experiment.geometric_t_max");
  e.n_uniform = get<int>(j, "experiment.n_uniform");
  e.alpha_star = get<double>(j, "experiment.alpha_star");
  e.seed = get<std::uint64_t>(j, "experiment.seed");
  e.random_pairs = get<int>(j, "experiment.random_pairs");
  e.monitor_shifts = get<std::vector<int>>(j, "experiment.monitor_shifts");
  e.equicontinuity_max_shift = get<double>(j, "experiment.equicontinuity_max_shift");
  e.floor_estimate = get<bool>(j, "experiment.floor_estimate");
  e.threads = get<int>(j, "experiment.threads");
  e.cross.enabled = get<bool>(j, "experiment.cross_validation.enabled");
  e.cross.epsilon = get<double>(j, "experiment.cross_validation.epsilon");
  e.cross.t = get<double>(j, "experiment.cross_validation.t");
  e.cross.dt = get<double>(j, "experiment.cross_validation.dt");
  e.cross.nv = get<int>(j, "experiment.cross_validation.nv");
  e.cross.nw = get<int>(j, "experiment.cross_validation.nw");
  e.cross.Lv = get<double>(j, "experiment.cross_validation.Lv");
  e.cross.Lw = get<double>(j, "experiment.cross_validation.Lw");
  e.cross.tolerance = get<double>(j, "experiment.cross_validation.tolerance");
  e.oracle.enabled = get<bool>(j, "experiment.oracle.enabled");
  e.oracle.refinement = get<int>(j, "experiment.oracle.refinement");
  e.oracle.tolerance = get<double>(j, "experiment.oracle.tolerance");
  Tolerances& t = e.tol;
  const std::string tp = "experiment.tolerances.";
  t.l1_slope_min = get<double>(j, tp + "l1_slope_min");
  t.l1_slope_max = get<double>(j, tp + "l1_slope_max");
  t.marginal_slope_min = get<double>(j, tp + "marginal_slope_min");
  t.marginal_slope_max = get<double>(j, tp + "marginal_slope_max");
  t.r2_min = get<double>(j, tp + "r2_min");
  t.envelope_margin = get<double>(j, tp + "envelope_margin");
  t.ratio_variation_max = get<double>(j, tp + "ratio_variation_max");
  t.monitor_scale = get<double>(j, tp + "monitor_scale");
  t.mass_defect = get<double>(j, tp + "mass_defect");
  t.theta_residual = get<double>(j, tp + "theta_residual");
  t.fixed_point = get<double>(j, tp + "fixed_point");
  t.sandwich_abs = get<double>(j, tp + "sandwich_abs");
  t.lemma_bar_nu_rel = get<double>(j, tp + "lemma_bar_nu_rel");
  cfg.output.dir = get<std::string>(j, "output.dir");
  cfg.output.diagnostics = get<bool>(j, "output.diagnostics");

  // Invariants, reported against the most specific field available.
  const double b = m.adaptation.b;
  if (!(b > 0.0)) throw ConfigError("model.adaptation.b", "b must be > 0");
  if (!(e.weight.kappa > 1.0 / (2.0 * b)))
    throw ConfigError("weights.kappa", "kappa = " + std::to_string(e.weight.kappa) + " violates the weight condition kappa > 1/(2b) = " +
                                           std::to_string(1.0 / (2.0 * b)));
  if (!(cfg.simulate_epsilon > 0.0 && cfg.simulate_epsilon <= 1.0))
    throw ConfigError("solver.epsilon", "epsilon must lie in (0, 1]");
  if (e.cross.dt <= 0.0 || e.cross.nv < 3 || e.cross.nw < 3 || e.cross.Lv <= 0.0 || e.cross.Lw <= 0.0)
    throw ConfigError("experiment.cross_validation", "dt, grid sizes and half-widths must be positive");
  if (e.oracle.refinement < 2) throw ConfigError("experiment.oracle.refinement", "must be >= 2");
  with_path("grids", [&] { e.grid.validate(); });
  with_path("model", [&] { m.validate(); });
  with_path("solver", [&] { e.solver.validate(); });
  with_path("experiment", [&] { e.validate(); });
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + err.what());
  }
  return parse_config(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("<file>", "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  flatten(to_json(RunConfig{}), "", out);
  for (auto& [k, v] : out)
    if (k == "weights.kappa") v = "1/b";
  return out;
}

}  // namespace fhn
