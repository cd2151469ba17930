#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "cfaudit/error.hpp"
#include "cfaudit/simulation.hpp"

using namespace cfaudit;

#ifndef CFAUDIT_SOURCE_DIR
#define CFAUDIT_SOURCE_DIR "."
#endif

namespace {

ScenarioConfig quick(int id) {
  ScenarioConfig cfg = ScenarioConfig::preset(id);
  cfg.forest.n_trees = 20;
  cfg.n_validation = 20000;
  return cfg;
}

}  // namespace

TEST(Simulation, DemoClosedForm) {
  DemoConfig cfg = DemoConfig::panel('A', 0.2);
  EXPECT_NEAR(true_demo_cfnr(cfg, SimGroup::minority), 0.2 + 0.6 * 0.2 * 0.7, 1e-15);
  EXPECT_NEAR(true_demo_cfnr(cfg, SimGroup::minority), 0.284, 1e-12);
  EXPECT_EQ(true_demo_cfpr(cfg, SimGroup::m1), 0.1);
}

TEST(Simulation, DemoObservationalRatesAreFlat) {
  const GeneratedData g = generate_demo_data(DemoConfig::panel('A', 0.8), 200000, 3);
  const Truth t = compute_truth(g);
  for (const auto& row : t.observational.rows) EXPECT_NEAR(row.fnr.value(), 0.2, 0.02);
  EXPECT_NEAR(t.observational.rows[3].fnr.value(), 0.2, 0.02);
}

TEST(Simulation, DemoPropensityIsTheBayesPosterior) {
  const GeneratedData g = generate_demo_data(DemoConfig::panel('B', 0.5), 100000, 4);
  // Empirical P(D = 1) within each (group, score) cell matches the mean of pi_true there.
  const GroupIndex gi = enumerate_groups(g.data);
  for (std::size_t grp = 0; grp < gi.size(); ++grp)
    for (int s = 0; s < 2; ++s) {
      double d = 0, pi = 0, n = 0;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (static_cast<std::size_t>(gi.membership.group_of_row[i]) == grp && g.data.score()[i] == s) {
          d += g.data.treatment()[i];
          pi += g.pi_true[static_cast<Eigen::Index>(i)];
          ++n;
        }
      if (n > 2000) EXPECT_NEAR(d / n, pi / n, 0.03);
    }
}

TEST(Simulation, DemoPanelValidation) {
  EXPECT_THROW(DemoConfig::panel('E', 0.2), ConfigError);
  EXPECT_THROW(DemoConfig::panel('A', 1.5), ConfigError);
}

TEST(Simulation, SameSeedSameData) {
  const ScenarioConfig cfg = quick(1);
  const GeneratedData a = generate_scenario_data(cfg, Role::train, 500, 7);
  const GeneratedData b = generate_scenario_data(cfg, Role::train, 500, 7);
  EXPECT_TRUE(a.data == b.data);
  EXPECT_EQ(a.y0, b.y0);
}

TEST(Simulation, EstimationDataNeedsARiskModel) {
  try {
    generate_scenario_data(quick(1), Role::estimation, 100, 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), "missing_dependency");
  }
}

TEST(Simulation, ProtectedFeaturesOnlyWhenAllowed) {
  const ScenarioConfig cfg = quick(1);
  const GeneratedData train = generate_scenario_data(cfg, Role::train, 300, 1);
  EXPECT_EQ(default_risk_features(cfg), (std::vector<std::string>{"x1", "x2", "x3", "x4"}));
  EXPECT_THROW(train_risk_model(train, cfg, 2, std::vector<std::string>{"a1", "x1"}), ConfigError);
  EXPECT_EQ(default_risk_features(quick(2)).front(), "a1");
}

TEST(Simulation, GroupSharesFollowConfiguration) {
  const ScenarioConfig cfg = quick(1);
  const GeneratedData g = generate_scenario_data(cfg, Role::train, 100000, 5);
  const GroupIndex gi = enumerate_groups(g.data);
  const std::vector<std::string> minority{"1", "1"}, majority{"0", "0"};
  EXPECT_NEAR(gi.counts[gi.find_labels(g.data, minority)] / 100000.0, 0.06, 0.005);
  EXPECT_NEAR(gi.counts[gi.find_labels(g.data, majority)] / 100000.0, 0.58, 0.01);
}

TEST(Simulation, ContrastReproducesGroupLogits) {
  const auto b = ScenarioConfig::contrast(0.6, 0.5, 0.4);
  const double lmaj = std::log(0.6 / 0.4);
  EXPECT_NEAR(lmaj + b[0], 0.0, 1e-12);
  EXPECT_NEAR(lmaj + b[0] + b[1] + b[2], std::log(0.4 / 0.6), 1e-12);
}

TEST(Simulation, BundledScenarioFilesMatchPresets) {
  for (int id = 1; id <= 3; ++id) {
    const ConfigMap c =
        ConfigMap::parse_file(std::string(CFAUDIT_SOURCE_DIR) + "/data/scenarios/scenario" + std::to_string(id) + ".conf");
    const ScenarioConfig f = ScenarioConfig::from_config(c);
    const ScenarioConfig p = ScenarioConfig::preset(id);
    EXPECT_EQ(f.nr_maj, p.nr_maj);
    EXPECT_EQ(f.nr_m, p.nr_m);
    EXPECT_EQ(f.nr_min, p.nr_min);
    EXPECT_EQ(f.or_maj, p.or_maj);
    EXPECT_EQ(f.or_m, p.or_m);
    EXPECT_EQ(f.or_min, p.or_min);
    EXPECT_EQ(f.z_m1, p.z_m1);
    EXPECT_EQ(f.z_m2, p.z_m2);
    EXPECT_EQ(f.z_min, p.z_min);
    EXPECT_EQ(f.group_probs, p.group_probs);
    EXPECT_EQ(f.x_mean, p.x_mean);
    EXPECT_EQ(f.risk_uses_protected, p.risk_uses_protected);
  }
}

TEST(Simulation, SmallGridHasOneRowPerTask) {
  GridConfig cfg;
  cfg.scenarios = {1, 2, 3};
  cfg.sizes = {500};
  cfg.methods = {Method::weighted_glm};
  cfg.reps = 5;
  for (int id : cfg.scenarios) cfg.scenario_configs.push_back(quick(id));
  const ReplicationGrid grid = replicate(cfg);
  EXPECT_EQ(grid.records.size(), 15u);
  EXPECT_EQ(grid.summary.size(), 3u);
  EXPECT_EQ(grid.truths.size(), 3u);
}

TEST(Simulation, GridIsIndependentOfExecution) {
  GridConfig cfg;
  cfg.scenarios = {2};
  cfg.sizes = {400};
  cfg.methods = {Method::weighted_glm, Method::regression};
  cfg.reps = 4;
  cfg.scenario_configs = {quick(2)};
  const ReplicationGrid a = replicate(cfg, Execution::serial);
  const ReplicationGrid b = replicate(cfg, Execution::parallel);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].negative.avg, b.records[k].negative.avg);
    EXPECT_EQ(a.records[k].positive.max, b.records[k].positive.max);
  }
}

TEST(Simulation, ResourceGuard) {
  GridConfig cfg;
  cfg.reps = 1000000;
  try {
    replicate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), "resource_guard");
  }
}
