#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfaudit/data_model.hpp"
#include "cfaudit/metrics.hpp"
#include "cfaudit/nuisance.hpp"
#include "cfaudit/parallel.hpp"

namespace cfaudit {

/// Values computed on one replicate dataset. `source_rows[i]` is the original record behind
/// replicate row i (identity for permutations). Throw InfeasibleError to have the replicate re-drawn.
using ReplicateStatistic = std::function<std::vector<std::optional<double>>(
    const Dataset& replicate, std::span<const std::size_t> source_rows, std::uint64_t seed)>;

struct ReplicateRun {
  /// values[r] is the statistic of replicate r.
  std::vector<std::vector<std::optional<double>>> values;
  /// Draws discarded because the statistic was infeasible.
  std::size_t failed_attempts = 0;
};

/// Replicates are drawn from streams keyed by (seed, replicate, attempt) and stored by index,
/// so serial and parallel runs agree exactly. Throws InfeasibleError("replicates_exhausted")
/// once more than 5 * count draws would be needed.
ReplicateRun permutation_replicates(const Dataset& ds, std::size_t count, std::uint64_t seed,
                                    const ReplicateStatistic& statistic, Execution exec = Execution::parallel);
ReplicateRun bootstrap_replicates(const Dataset& ds, std::size_t count, std::size_t m, std::uint64_t seed,
                                  const ReplicateStatistic& statistic, Execution exec = Execution::parallel);

/// What to recompute on every replicate.
struct MetricSpec {
  Method method = Method::weighted_glm;
  Normalization normalization = Normalization::pair_mean;
  NuisanceOptions nuisance;
  /// Refit nuisance models on each replicate. When false, `fixed` supplies per-record values.
  bool refit = true;
  std::optional<NuisanceValues> fixed;
};

/// The five metrics for both kinds, positive first, in MetricId order.
std::vector<double> metric_vector(const AuditEstimate& est);
std::size_t metric_slot(RateKind kind, MetricId id);

/// Full pipeline on a replicate: nuisance (refit or carried over), tables, metrics.
AuditEstimate evaluate_replicate(const Dataset& replicate, std::span<const std::size_t> source_rows,
                                 const MetricSpec& spec, std::uint64_t seed);

/// Statistic returning metric_vector of evaluate_replicate.
ReplicateStatistic metric_statistic(const MetricSpec& spec);

struct ReferenceDistribution {
  RateKind kind = RateKind::negative;
  MetricId metric = MetricId::avg;
  std::vector<double> samples;
  std::uint64_t seed = 0;
  bool refit = true;
  std::size_t failed_attempts = 0;

  std::size_t size() const { return samples.size(); }
};

/// Jointly permutes whole protected vectors across records P times (P >= 100).
ReferenceDistribution permutation_reference(const Dataset& ds, const MetricSpec& spec, RateKind kind, MetricId metric,
                                            std::size_t permutations, std::uint64_t seed,
                                            Execution exec = Execution::parallel);

/// Share of reference samples strictly below `observed`.
double u_value(const ReferenceDistribution& ref, double observed);
double u_value(std::span<const double> samples, double observed);

struct ResampleRule {
  enum class Kind { power, fixed, full };
  Kind kind = Kind::power;
  double exponent = 0.75;
  std::size_t size = 0;  // for Kind::fixed

  /// Parses "power:0.75", "fixed:200" or "full".
  static ResampleRule parse(const std::string& text);
  std::string to_string() const;
};

/// ceil(n^exponent) for the power rule. Throws ConfigError when the result is not below n
/// (except for the diagnostic full rule).
std::size_t resample_size(std::size_t n, const ResampleRule& rule);

struct BootstrapResult {
  double theta_n = 0.0;
  std::vector<double> resample_estimates;
  std::vector<double> rescaled;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t B = 0;
  double se = 0.0;
  std::uint64_t seed = 0;
  std::size_t failed_attempts = 0;
};

/// Builds the result from resample estimates: rescaled = sqrt(m) (estimate - theta_n),
/// se = sqrt(sample variance of rescaled / n).
BootstrapResult make_bootstrap_result(double theta_n, std::vector<double> resample_estimates, std::size_t m,
                                      std::size_t n);

/// Rescaled bootstrap of one metric; needs B >= 200 and n >= 50.
BootstrapResult rescaled_bootstrap(const Dataset& ds, const MetricSpec& spec, RateKind kind, MetricId metric,
                                   std::size_t B, const ResampleRule& rule, std::uint64_t seed,
                                   Execution exec = Execution::parallel);

enum class IntervalMethod { t, normal, percentile };
std::string to_string(IntervalMethod method);

struct ConfidenceInterval {
  IntervalMethod method = IntervalMethod::t;
  double level = 0.9;
  double lo = 0.0;
  double hi = 0.0;
  double truncated_lo = 0.0;

  double length() const { return hi - lo; }
  bool contains(double value) const { return lo <= value && value <= hi; }
};

ConfidenceInterval ci_t_interval(const BootstrapResult& br, double alpha);
ConfidenceInterval ci_normal(const BootstrapResult& br, double alpha);
ConfidenceInterval ci_percentile(const BootstrapResult& br, double alpha);

}  // namespace cfaudit
