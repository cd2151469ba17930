#include <cmath>

#include <gtest/gtest.h>

#include "cfaudit/error.hpp"
#include "cfaudit/inference.hpp"
#include "cfaudit/random.hpp"
#include "cfaudit/simulation.hpp"
#include "fixtures.hpp"

using namespace cfaudit;

namespace {

Dataset uniform_column(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  std::vector<cfaudit::testing::Row> rows;
  for (std::size_t i = 0; i < n; ++i)
    rows.push_back({i % 2 ? "1" : "0", "0", 0, static_cast<int>(i % 3 == 0), 0, {uniform01(rng)}});
  return cfaudit::testing::make_dataset(rows, 1);
}

ReplicateStatistic column_mean() {
  return [](const Dataset& ds, std::span<const std::size_t>, std::uint64_t) {
    return std::vector<std::optional<double>>{ds.covariates().col(0).mean()};
  };
}

}  // namespace

TEST(Inference, UValueUsesStrictInequality) {
  const std::vector<double> ref{0.1, 0.2, 0.2, 0.3};
  EXPECT_EQ(u_value(ref, 0.2), 0.25);
  EXPECT_EQ(u_value(ref, 0.35), 1.0);
  EXPECT_EQ(u_value(ref, 0.1), 0.0);
}

TEST(Inference, ResampleSizeRule) {
  EXPECT_EQ(resample_size(9000, ResampleRule{}), 925u);
  EXPECT_EQ(resample_size(10000, ResampleRule{}), 1000u);
  EXPECT_EQ(resample_size(100, ResampleRule::parse("fixed:40")), 40u);
  EXPECT_THROW(resample_size(100, ResampleRule::parse("fixed:100")), ConfigError);
  EXPECT_EQ(resample_size(100, ResampleRule::parse("full")), 100u);
  EXPECT_EQ(ResampleRule::parse("power:0.75").to_string(), "power:0.75");
  EXPECT_THROW(ResampleRule::parse("half"), ConfigError);
}

TEST(Inference, TIntervalFromStudentizedResamples) {
  BootstrapResult br;
  br.theta_n = 0.5;
  br.se = 0.1;
  br.m = 4;
  br.n = 16;
  br.resample_estimates = {0.3, 0.4, 0.6, 0.7};  // t* = {-2, -1, 1, 2}
  const ConfidenceInterval ci = ci_t_interval(br, 0.5);
  EXPECT_NEAR(ci.lo, 0.5 - 0.125, 1e-12);
  EXPECT_NEAR(ci.hi, 0.5 + 0.125, 1e-12);
}

TEST(Inference, PercentileIntervalBackTransforms) {
  const BootstrapResult br = make_bootstrap_result(0.5, {-1.0, 0.0, 1.0, 2.0}, 4, 16);
  EXPECT_EQ(br.rescaled, (std::vector<double>{-3.0, -1.0, 1.0, 3.0}));
  const ConfidenceInterval ci = ci_percentile(br, 0.5);
  EXPECT_NEAR(ci.lo, -0.25, 1e-12);
  EXPECT_NEAR(ci.hi, 1.25, 1e-12);
  EXPECT_EQ(ci.truncated_lo, 0.0);
}

TEST(Inference, PercentileAndTIntervalsHaveEqualLength) {
  const BootstrapResult br = make_bootstrap_result(0.2, {0.1, 0.25, 0.3, 0.15, 0.22, 0.4}, 9, 50);
  EXPECT_NEAR(ci_t_interval(br, 0.1).length(), ci_percentile(br, 0.1).length(), 1e-12);
}

TEST(Inference, NormalInterval) {
  BootstrapResult br;
  br.theta_n = 0.1;
  br.se = 0.02;
  const ConfidenceInterval ci = ci_normal(br, 0.1);
  EXPECT_NEAR(ci.lo, 0.0671, 5e-5);
  EXPECT_NEAR(ci.hi, 0.1329, 5e-5);
}

TEST(Inference, StandardErrorUsesRescaledVariance) {
  const BootstrapResult br = make_bootstrap_result(0.5, {-1.0, 0.0, 1.0, 2.0}, 4, 16);
  EXPECT_NEAR(br.se, std::sqrt((9.0 + 1.0 + 1.0 + 9.0) / 3.0 / 16.0), 1e-15);
}

TEST(Inference, ZeroSpreadGivesPointIntervals) {
  const BootstrapResult br = make_bootstrap_result(0.3, {0.3, 0.3, 0.3}, 4, 16);
  EXPECT_EQ(br.se, 0.0);
  const ConfidenceInterval ci = ci_t_interval(br, 0.1);
  EXPECT_EQ(ci.lo, 0.3);
  EXPECT_EQ(ci.hi, 0.3);
}

TEST(Inference, BadAlphaIsAConfigError) {
  const BootstrapResult br = make_bootstrap_result(0.5, {0.4, 0.6}, 4, 16);
  EXPECT_THROW(ci_normal(br, 1.5), ConfigError);
}

TEST(Inference, SerialAndParallelReplicatesAgree) {
  const Dataset ds = uniform_column(200, 3);
  const auto a = bootstrap_replicates(ds, 64, 50, 9, column_mean(), Execution::serial);
  const auto b = bootstrap_replicates(ds, 64, 50, 9, column_mean(), Execution::parallel);
  EXPECT_EQ(a.values, b.values);
  const auto c = permutation_replicates(ds, 32, 9, column_mean(), Execution::serial);
  const auto d = permutation_replicates(ds, 32, 9, column_mean(), Execution::parallel);
  EXPECT_EQ(c.values, d.values);
}

TEST(Inference, InfeasibleDrawsAreRedrawn) {
  const Dataset ds = uniform_column(100, 4);
  const ReplicateStatistic flaky = [](const Dataset& rep, std::span<const std::size_t>, std::uint64_t seed) {
    if (seed % 3 == 0) throw InfeasibleError("metric_infeasible", "unlucky draw");
    return std::vector<std::optional<double>>{rep.covariates().col(0).mean()};
  };
  const ReplicateRun run = bootstrap_replicates(ds, 200, 30, 1, flaky, Execution::serial);
  EXPECT_EQ(run.values.size(), 200u);
  EXPECT_GT(run.failed_attempts, 0u);
}

TEST(Inference, PersistentFailureExhaustsTheBudget) {
  const Dataset ds = uniform_column(100, 4);
  const ReplicateStatistic never = [](const Dataset&, std::span<const std::size_t>, std::uint64_t)
      -> std::vector<std::optional<double>> { throw InfeasibleError("metric_infeasible", "always"); };
  try {
    permutation_replicates(ds, 10, 1, never, Execution::serial);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.code(), "replicates_exhausted");
  }
}

TEST(Inference, PermutationsKeepTheMultisetOfGroups) {
  const Dataset ds = uniform_column(60, 5);
  const ReplicateStatistic ones = [](const Dataset& rep, std::span<const std::size_t>, std::uint64_t) {
    double s = 0;
    for (std::size_t i = 0; i < rep.size(); ++i) s += rep.protected_code(i, 0);
    return std::vector<std::optional<double>>{s};
  };
  const ReplicateRun run = permutation_replicates(ds, 20, 2, ones);
  for (const auto& v : run.values) EXPECT_EQ(*v[0], 30.0);
}

TEST(Inference, ReferenceNeedsEnoughPermutations) {
  const Dataset ds = uniform_column(60, 5);
  EXPECT_THROW(permutation_reference(ds, MetricSpec{}, RateKind::negative, MetricId::avg, 50, 1), ConfigError);
}

TEST(Inference, BootstrapNeedsEnoughResamples) {
  const Dataset ds = uniform_column(60, 5);
  EXPECT_THROW(rescaled_bootstrap(ds, MetricSpec{}, RateKind::negative, MetricId::avg, 100, ResampleRule{}, 1),
               ConfigError);
}

TEST(Inference, MetricSlotsArePositiveFirst) {
  EXPECT_EQ(metric_slot(RateKind::positive, MetricId::avg), 0u);
  EXPECT_EQ(metric_slot(RateKind::negative, MetricId::obs), 9u);
}

TEST(Inference, EndToEndReferenceAndBootstrapOnScenarioData) {
  const ScenarioConfig cfg = ScenarioConfig::preset(2);
  const GeneratedData train = generate_scenario_data(cfg, Role::train, 1000, 1);
  ScenarioConfig small = cfg;
  small.forest.n_trees = 20;
  const RiskModel model = train_risk_model(train, small, 2);
  const GeneratedData est = generate_scenario_data(cfg, Role::estimation, 1500, 3, &model);
  MetricSpec spec;
  const ReferenceDistribution ref =
      permutation_reference(est.data, spec, RateKind::negative, MetricId::avg, 100, 4, Execution::serial);
  EXPECT_EQ(ref.size(), 100u);
  const BootstrapResult br =
      rescaled_bootstrap(est.data, spec, RateKind::negative, MetricId::avg, 200, ResampleRule{}, 5);
  EXPECT_EQ(br.m, resample_size(1500, ResampleRule{}));
  EXPECT_GT(br.se, 0.0);
  for (double e : br.resample_estimates) EXPECT_GE(e, 0.0);
}
