#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfaudit/data_model.hpp"
#include "cfaudit/nuisance.hpp"

namespace cfaudit {

/// positive: false positive rates (cFPR); negative: false negative rates (cFNR).
enum class RateKind { positive, negative };

std::string to_string(RateKind kind);
RateKind parse_rate_kind(const std::string& name);

/// A ratio of weight sums. An empty denominator leaves the rate undefined; reading the value
/// of an undefined rate throws instead of yielding a number.
struct Rate {
  std::optional<double> estimate;
  double numerator = 0.0;
  double denominator = 0.0;

  bool defined() const { return estimate.has_value(); }
  /// Throws InfeasibleError("undefined_rate") when undefined.
  double value() const;

  static Rate ratio(double numerator, double denominator);
};

struct GroupRates {
  Rate fpr;
  Rate fnr;
  std::size_t count = 0;
  std::size_t untreated = 0;
  double min_weight = 0.0;  // over untreated members; 0 when none
  double max_weight = 0.0;

  const Rate& rate(RateKind kind) const { return kind == RateKind::positive ? fpr : fnr; }
};

enum class TableKind { counterfactual_weighted, counterfactual_regression, observational, truth };
std::string to_string(TableKind kind);

/// One row per group of the grouping that produced it.
struct ErrorRateTable {
  TableKind kind = TableKind::observational;
  std::vector<GroupRates> rows;
  /// Regression rates pushed back into [0, 1].
  std::size_t truncated_rates = 0;

  std::size_t size() const { return rows.size(); }
  const Rate& rate(std::size_t group, RateKind kind) const { return rows.at(group).rate(kind); }
  std::size_t defined_count(RateKind kind) const;
};

/// Inverse-probability-weighted counterfactual rates; untreated records get weight 1 / (1 - pi).
ErrorRateTable weighted_rate_table(const Dataset& ds, const Grouping& grouping, const Eigen::VectorXd& pi);
/// Regression estimator from per-record outcome-model predictions.
ErrorRateTable regression_rate_table(const Dataset& ds, const Grouping& grouping, const OutcomePredictions& pred);
/// Plain error rates against `reference` outcomes (observed Y for observational rates, Y0 for truth).
ErrorRateTable counting_rate_table(const Dataset& ds, const Grouping& grouping,
                                   std::span<const std::uint8_t> reference, TableKind kind);
ErrorRateTable observational_rate_table(const Dataset& ds, const Grouping& grouping);

Rate counterfactual_fpr(const Dataset& ds, const PropensityEstimate& pe, const GroupKey& group);
Rate counterfactual_fnr(const Dataset& ds, const PropensityEstimate& pe, const GroupKey& group);
Rate regression_cfpr(const Dataset& ds, const OutcomeRegressions& reg, const GroupKey& group);
Rate regression_cfnr(const Dataset& ds, const OutcomeRegressions& reg, const GroupKey& group);
Rate regression_cfpr(const Dataset& ds, const OutcomePredictions& pred, const GroupKey& group);
Rate regression_cfnr(const Dataset& ds, const OutcomePredictions& pred, const GroupKey& group);
/// (fpr, fnr) against observed outcomes regardless of treatment.
std::pair<Rate, Rate> observational_rates(const Dataset& ds, const GroupKey& group);

/// Rate table for `method` over an arbitrary grouping. weighted_true needs nuisance.propensity
/// to hold the generating propensity.
ErrorRateTable rate_table(const Dataset& ds, const Grouping& grouping, Method method, const NuisanceValues& nuisance);

/// Intersectional table. Throws InfeasibleError("audit_infeasible") when no group has a defined rate.
ErrorRateTable error_rate_table(const Dataset& ds, Method method, const NuisanceValues& nuisance, const GroupIndex& gi);

}  // namespace cfaudit
