#include <gtest/gtest.h>

#include "fhn/config.hpp"
#include "fhn/errors.hpp"

using namespace fhn;

namespace {

std::string error_path(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.field_path;
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_config_text("{}");
  const ExperimentSpec d;
  EXPECT_EQ(c.experiment.epsilons, d.epsilons);
  EXPECT_EQ(c.experiment.grid.nv, d.grid.nv);
  EXPECT_EQ(c.experiment.solver.dt, d.solver.dt);
  EXPECT_EQ(c.experiment.seed, d.seed);
  EXPECT_DOUBLE_EQ(c.experiment.weight.kappa, 1.0 / c.experiment.model.adaptation.b);
  EXPECT_EQ(c.output.dir, "runs");
}

TEST(Config, KappaDefaultFollowsB) {
  const RunConfig c = parse_config_text(R"({"model": {"adaptation": {"b": 2.0}}})");
  EXPECT_DOUBLE_EQ(c.experiment.weight.kappa, 0.5);
}

TEST(Config, RejectsKappaBelowWeightCondition) {
  EXPECT_EQ(error_path(R"({"weights": {"kappa": 0.4}})"), "weights.kappa");
  EXPECT_EQ(error_path(R"({"weights": {"kappa": 0.5}})"), "weights.kappa");
  EXPECT_EQ(error_path(R"({"weights": {"kappa": 0.6}})"), "<accepted>");
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_EQ(error_path(R"({"grids": {"nz": 3}})"), "grids.nz");
  EXPECT_EQ(error_path(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(error_path(R"({"grids": {"nx": 8.5}})"), "grids.nx");
  EXPECT_EQ(error_path(R"({"solver": {"dt": "small"}})"), "solver.dt");
  EXPECT_EQ(error_path(R"({"experiment": {"epsilons": [0.1, 0.2]}})").rfind("experiment", 0), 0u);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, EffectiveConfigRoundTrips) {
  const RunConfig a = parse_config_text(
      R"({"grids": {"nx": 4, "nv": 64}, "experiment": {"epsilons": [0.2, 0.1, 0.05], "seed": 5},
          "weights": {"kappa": 0.8, "variant": "bar_m"}})");
  const auto j = to_json(a);
  const RunConfig b = parse_config(j);
  EXPECT_EQ(to_json(b).dump(), j.dump());
  EXPECT_EQ(b.experiment.grid.nx, 4);
  EXPECT_EQ(b.experiment.seed, 5u);
  EXPECT_EQ(b.experiment.weight.variant, WeightVariant::bar_m);
}

TEST(Config, KeyListCoversEveryLeaf) {
  const auto keys = config_keys();
  auto has = [&](const std::string& k) {
    for (const auto& [name, def] : keys)
      if (name == k) return true;
    return false;
  };
  EXPECT_TRUE(has("grids.nv"));
  EXPECT_TRUE(has("weights.kappa"));
  EXPECT_TRUE(has("experiment.tolerances.r2_min"));
  EXPECT_TRUE(has("output.dir"));
}
