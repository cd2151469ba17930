#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfaudit/config.hpp"
#include "cfaudit/data_model.hpp"
#include "cfaudit/inference.hpp"
#include "cfaudit/metrics.hpp"
#include "cfaudit/nuisance.hpp"

namespace cfaudit {

inline constexpr const char* kToolVersion = "0.1.0";

struct AuditSettings {
  std::string input;
  ColumnSpec columns;
  Method method = Method::weighted_glm;
  NuisanceOptions nuisance;
  std::size_t permutations = 1000;
  std::size_t bootstrap = 1000;
  double alpha = 0.1;
  ResampleRule resample;
  bool refit = true;
  std::uint64_t seed = 1;
  Normalization normalization = Normalization::pair_mean;
  std::vector<RateKind> kinds{RateKind::positive, RateKind::negative};

  static AuditSettings from_config(const ConfigMap& cfg);
};

struct IntervalSet {
  double se = 0.0;
  ConfidenceInterval t, normal, percentile;
  std::size_t resamples = 0;  // resamples where the quantity was defined
};

struct MetricInference {
  RateKind kind = RateKind::negative;
  MetricId metric = MetricId::avg;
  double estimate = 0.0;
  std::optional<double> u_value;
  std::optional<IntervalSet> intervals;
};

struct GroupRateInference {
  std::size_t group = 0;
  RateKind kind = RateKind::negative;
  Rate rate;
  std::optional<IntervalSet> intervals;
};

struct AuditReport {
  AuditSettings settings;
  std::size_t records = 0;
  std::size_t rejected_rows = 0;
  std::vector<std::string> group_labels;
  std::vector<std::size_t> group_counts;
  AuditEstimate estimate;
  std::optional<PropensityEstimate> propensity;  // without the per-record vector
  std::vector<MetricInference> metrics;          // in metric_slot order
  std::vector<GroupRateInference> group_rates;   // positive block, then negative block
  /// reference[slot] holds the permutation samples of metric_slot `slot`.
  std::vector<std::vector<double>> reference;
  std::size_t resample_size = 0;
  std::size_t permutation_failures = 0;
  std::size_t bootstrap_failures = 0;
};

/// Metrics, permutation u-values, and rescaled-bootstrap intervals for every metric and group rate.
/// The hidden-truth sidecar of simulated data is never read here.
AuditReport run_audit(const AuditSettings& settings, Execution exec = Execution::parallel);
AuditReport run_audit(const Dataset& ds, const AuditSettings& settings, Execution exec = Execution::parallel);

/// Writes report.json, plot_metrics.csv, plot_group_rates.csv and reference_samples.csv into `dir`.
void write_audit_outputs(const AuditReport& report, const ConfigMap& config, const std::string& dir);

/// Shortest round-trip decimal form.
std::string format_number(double value);
/// Quotes a CSV field when it contains a delimiter, quote or line break.
std::string csv_field(const std::string& text);

}  // namespace cfaudit
