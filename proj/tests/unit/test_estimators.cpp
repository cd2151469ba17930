#include <gtest/gtest.h>

#include "cfaudit/error.hpp"
#include "cfaudit/estimators.hpp"
#include "fixtures.hpp"

using namespace cfaudit;
using cfaudit::testing::make_dataset;

namespace {

// One group; weights 1/(1 - pi) are exact in binary for these propensities.
Dataset hand_group() {
  return make_dataset({
      {"0", "0", 0, 0, 1, {}},  // pi 0.5   -> w 2
      {"0", "0", 0, 0, 0, {}},  // pi 0.75  -> w 4
      {"0", "0", 0, 1, 0, {}},  // pi 0.875 -> w 8
      {"0", "0", 0, 1, 1, {}},  // pi 0     -> w 1
      {"0", "0", 1, 1, 1, {}},  // treated, ignored
  });
}

Eigen::VectorXd hand_pi() {
  Eigen::VectorXd pi(5);
  pi << 0.5, 0.75, 0.875, 0.0, 0.9;
  return pi;
}

}  // namespace

TEST(Estimators, WeightedRatesMatchHandRatios) {
  const Dataset ds = hand_group();
  PropensityEstimate pe;
  pe.pi = hand_pi();
  const GroupKey g{{0, 0}};
  const Rate fpr = counterfactual_fpr(ds, pe, g);
  const Rate fnr = counterfactual_fnr(ds, pe, g);
  EXPECT_EQ(fpr.value(), 2.0 / 6.0);
  EXPECT_EQ(fnr.value(), 8.0 / 9.0);
  EXPECT_EQ(fpr.numerator, 2.0);
  EXPECT_EQ(fnr.denominator, 9.0);
}

TEST(Estimators, TreatedRecordsDoNotContribute) {
  Dataset ds = hand_group();
  PropensityEstimate pe;
  pe.pi = hand_pi();
  pe.pi[4] = 0.1;
  EXPECT_EQ(counterfactual_fnr(ds, pe, GroupKey{{0, 0}}).value(), 8.0 / 9.0);
}

TEST(Estimators, EmptyDenominatorIsUndefinedNotZero) {
  const Dataset ds = make_dataset({{"0", "0", 0, 0, 1, {}}, {"0", "0", 1, 1, 1, {}}});
  PropensityEstimate pe;
  pe.pi = Eigen::VectorXd::Constant(2, 0.5);
  const Rate fnr = counterfactual_fnr(ds, pe, GroupKey{{0, 0}});
  EXPECT_FALSE(fnr.defined());
  EXPECT_THROW(fnr.value(), InfeasibleError);
  EXPECT_TRUE(counterfactual_fpr(ds, pe, GroupKey{{0, 0}}).defined());
}

TEST(Estimators, WeightedRatesAreScaleInvariant) {
  const Dataset ds = hand_group();
  const GroupIndex gi = enumerate_groups(ds);
  const Eigen::VectorXd pi = hand_pi();
  const ErrorRateTable base = weighted_rate_table(ds, gi.membership, pi);
  // pi' with 1/(1 - pi') = 3/(1 - pi)
  Eigen::VectorXd scaled = pi;
  for (Eigen::Index i = 0; i < pi.size(); ++i) scaled[i] = 1.0 - (1.0 - pi[i]) / 3.0;
  const ErrorRateTable t = weighted_rate_table(ds, gi.membership, scaled);
  EXPECT_NEAR(t.rows[0].fnr.value(), base.rows[0].fnr.value(), 1e-15);
  EXPECT_NEAR(t.rows[0].fpr.value(), base.rows[0].fpr.value(), 1e-15);
}

TEST(Estimators, RegressionRatesMatchHandSums) {
  const Dataset ds = make_dataset({{"0", "0", 0, 0, 1, {}}, {"0", "0", 1, 1, 0, {}}, {"0", "0", 0, 1, 1, {}}});
  OutcomePredictions pred;
  pred.mu0_at_score1 = Eigen::Vector3d(0.25, 0.5, 0.75);
  pred.mu0_at_score0 = Eigen::Vector3d(0.5, 0.5, 0.5);
  pred.mu0_star = Eigen::Vector3d(0.5, 0.25, 0.5);
  const GroupKey g{{0, 0}};
  EXPECT_DOUBLE_EQ(regression_cfpr(ds, pred, g).value(), 1.0 / 1.75);
  EXPECT_DOUBLE_EQ(regression_cfnr(ds, pred, g).value(), 0.5 / 1.25);
}

TEST(Estimators, RegressionRatesAreTruncatedToUnitInterval) {
  const Dataset ds = make_dataset({{"0", "0", 0, 0, 0, {}}, {"0", "0", 0, 1, 0, {}}});
  OutcomePredictions pred;
  pred.mu0_at_score1 = Eigen::Vector2d(0.5, 0.5);
  pred.mu0_at_score0 = Eigen::Vector2d(0.9, 0.9);
  pred.mu0_star = Eigen::Vector2d(0.3, 0.3);
  const GroupIndex gi = enumerate_groups(ds);
  const ErrorRateTable t = regression_rate_table(ds, gi.membership, pred);
  EXPECT_EQ(t.rows[0].fnr.value(), 1.0);
  EXPECT_EQ(t.truncated_rates, 1u);
}

TEST(Estimators, ObservationalRatesIgnoreTreatment) {
  const Dataset ds = make_dataset({{"0", "0", 1, 1, 0, {}}, {"0", "0", 0, 1, 1, {}}, {"0", "0", 1, 0, 1, {}},
                                   {"0", "0", 0, 0, 0, {}}});
  const auto [fpr, fnr] = observational_rates(ds, GroupKey{{0, 0}});
  EXPECT_EQ(fpr.value(), 0.5);
  EXPECT_EQ(fnr.value(), 0.5);
}

TEST(Estimators, NoDefinedGroupMakesTheAuditInfeasible) {
  const Dataset ds = make_dataset({{"0", "0", 1, 1, 0, {}}, {"1", "1", 1, 0, 1, {}}});
  NuisanceValues nv;
  PropensityEstimate pe;
  pe.pi = Eigen::VectorXd::Constant(2, 0.5);
  nv.propensity = pe;
  const GroupIndex gi = enumerate_groups(ds);
  try {
    error_rate_table(ds, Method::weighted_glm, nv, gi);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.code(), "audit_infeasible");
  }
}

TEST(Estimators, MethodNamesRoundTrip) {
  for (Method m : {Method::weighted_glm, Method::weighted_ensemble, Method::weighted_true, Method::regression,
                   Method::observational})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("ipw"), ConfigError);
  EXPECT_EQ(parse_rate_kind("fnr"), RateKind::negative);
}
