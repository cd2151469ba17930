#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfaudit/data_model.hpp"
#include "cfaudit/estimators.hpp"
#include "cfaudit/nuisance.hpp"

namespace cfaudit {

/// pair_mean divides pair sums by the number of pairs; paper_literal divides by the number of groups.
enum class Normalization { pair_mean, paper_literal };

std::string to_string(Normalization mode);

struct PairDelta {
  std::size_t first = 0;   // first < second
  std::size_t second = 0;
  double signed_diff = 0.0;  // rate(first) - rate(second)
  double abs_diff = 0.0;
};

struct ExcludedPair {
  std::size_t first = 0;
  std::size_t second = 0;
  std::string reason;
};

struct PairwiseDeltas {
  RateKind kind = RateKind::positive;
  std::vector<PairDelta> entries;
  std::vector<ExcludedPair> excluded;
  std::size_t defined_groups = 0;
  std::size_t total_groups = 0;

  bool partial() const { return !excluded.empty(); }
};

/// One entry per unordered pair of groups with defined rates.
/// Throws InfeasibleError("metric_infeasible") when fewer than two groups are defined.
PairwiseDeltas pairwise_differences(const ErrorRateTable& table, RateKind kind);

double delta_avg(const PairwiseDeltas& pd, Normalization mode = Normalization::pair_mean);

struct MaxWitness {
  double value = 0.0;
  std::size_t first = 0;
  std::size_t second = 0;
};

/// Largest |difference|; ties go to the first pair in canonical order.
MaxWitness delta_max_witness(const PairwiseDeltas& pd);
double delta_max(const PairwiseDeltas& pd);

/// Variance of the absolute differences. A single pair yields 0 and appends a warning.
double delta_var(const PairwiseDeltas& pd, Normalization mode = Normalization::pair_mean,
                 std::vector<std::string>* warnings = nullptr);

/// Sum of within-characteristic absolute differences over the number of such pairs.
/// Throws InfeasibleError("metric_infeasible") when a characteristic has fewer than two defined levels.
double delta_marg(std::span<const ErrorRateTable> marginal_tables, RateKind kind);

/// delta_avg over observational rates.
double delta_obs(const Dataset& ds, const GroupIndex& gi, RateKind kind,
                 Normalization mode = Normalization::pair_mean);

enum class MetricId { avg, max, var, marg, obs };

std::string to_string(MetricId id);
MetricId parse_metric_id(const std::string& name);

struct MetricSuite {
  RateKind kind = RateKind::positive;
  double avg = 0.0;
  double max = 0.0;
  double var = 0.0;
  double marg = 0.0;
  double obs = 0.0;
  Normalization normalization = Normalization::pair_mean;
  std::size_t pair_count = 0;
  std::size_t excluded_pairs = 0;
  bool partial = false;
  MaxWitness max_witness;
  std::vector<std::string> warnings;

  double value(MetricId id) const;
};

/// Everything one pipeline run produces for a dataset.
struct AuditEstimate {
  ErrorRateTable table;
  std::vector<ErrorRateTable> marginal_tables;
  ErrorRateTable observational;
  MetricSuite positive;
  MetricSuite negative;

  const MetricSuite& suite(RateKind kind) const { return kind == RateKind::positive ? positive : negative; }
};

/// Assembles the five metrics from precomputed tables.
MetricSuite metric_suite(const ErrorRateTable& table, std::span<const ErrorRateTable> marginal_tables,
                         const ErrorRateTable& observational, RateKind kind,
                         Normalization mode = Normalization::pair_mean);

/// Fits nothing: `nuisance` must already hold what `method` needs for `ds`.
MetricSuite metric_suite(const Dataset& ds, const GroupIndex& gi, Method method, RateKind kind,
                         const NuisanceValues& nuisance, Normalization mode = Normalization::pair_mean);

AuditEstimate estimate_audit(const Dataset& ds, const GroupIndex& gi, Method method, const NuisanceValues& nuisance,
                             Normalization mode = Normalization::pair_mean);

}  // namespace cfaudit
