#include "cfaudit/metrics.hpp"

#include <cmath>

#include "cfaudit/error.hpp"

namespace cfaudit {

std::string to_string(Normalization mode) {
  return mode == Normalization::pair_mean ? "pair-mean" : "paper-literal";
}

std::string to_string(MetricId id) {
  switch (id) {
    case MetricId::avg: return "avg";
    case MetricId::max: return "max";
    case MetricId::var: return "var";
    case MetricId::marg: return "marg";
    case MetricId::obs: return "obs";
  }
  return "unknown";
}

MetricId parse_metric_id(const std::string& name) {
  for (MetricId id : {MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs})
    if (to_string(id) == name) return id;
  throw ConfigError("unknown metric '" + name + "'");
}

double MetricSuite::value(MetricId id) const {
  switch (id) {
    case MetricId::avg: return avg;
    case MetricId::max: return max;
    case MetricId::var: return var;
    case MetricId::marg: return marg;
    case MetricId::obs: return obs;
  }
  return 0.0;
}

PairwiseDeltas pairwise_differences(const ErrorRateTable& table, RateKind kind) {
  PairwiseDeltas pd;
  pd.kind = kind;
  pd.total_groups = table.size();
  pd.defined_groups = table.defined_count(kind);
  if (pd.defined_groups < 2)
    throw InfeasibleError("metric_infeasible", "fewer than two groups have a defined " + to_string(kind) +
                                                   " error rate; consider merging sparse groups");
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = i + 1; j < table.size(); ++j) {
      const Rate& a = table.rate(i, kind);
      const Rate& b = table.rate(j, kind);
      if (!a.defined() || !b.defined()) {
        pd.excluded.push_back({i, j, !a.defined() ? "first group undefined" : "second group undefined"});
        continue;
      }
      const double diff = *a.estimate - *b.estimate;
      pd.entries.push_back({i, j, diff, std::abs(diff)});
    }
  return pd;
}

double delta_avg(const PairwiseDeltas& pd, Normalization mode) {
  double sum = 0.0;
  for (const auto& e : pd.entries) sum += e.abs_diff;
  const double denom = mode == Normalization::pair_mean ? static_cast<double>(pd.entries.size())
                                                        : static_cast<double>(pd.defined_groups);
  return denom > 0.0 ? sum / denom : 0.0;
}

MaxWitness delta_max_witness(const PairwiseDeltas& pd) {
  MaxWitness w;
  bool first = true;
  for (const auto& e : pd.entries)
    if (first || e.abs_diff > w.value) {
      w = {e.abs_diff, e.first, e.second};
      first = false;
    }
  return w;
}

double delta_max(const PairwiseDeltas& pd) { return delta_max_witness(pd).value; }

double delta_var(const PairwiseDeltas& pd, Normalization mode, std::vector<std::string>* warnings) {
  if (pd.entries.size() < 2) {
    if (warnings) warnings->push_back("delta_var: only one pair, variance reported as 0");
    return 0.0;
  }
  const double center = delta_avg(pd, mode);
  double ss = 0.0;
  for (const auto& e : pd.entries) ss += (e.abs_diff - center) * (e.abs_diff - center);
  const double denom = mode == Normalization::pair_mean ? static_cast<double>(pd.entries.size() - 1)
                                                        : static_cast<double>(pd.defined_groups - 1);
  return ss / denom;
}

double delta_marg(std::span<const ErrorRateTable> marginal_tables, RateKind kind) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& t : marginal_tables) {
    const PairwiseDeltas pd = pairwise_differences(t, kind);
    for (const auto& e : pd.entries) sum += e.abs_diff;
    pairs += pd.entries.size();
  }
  if (pairs == 0) throw InfeasibleError("metric_infeasible", "no within-characteristic pairs");
  return sum / static_cast<double>(pairs);
}

double delta_obs(const Dataset& ds, const GroupIndex& gi, RateKind kind, Normalization mode) {
  return delta_avg(pairwise_differences(observational_rate_table(ds, gi.membership), kind), mode);
}

MetricSuite metric_suite(const ErrorRateTable& table, std::span<const ErrorRateTable> marginal_tables,
                         const ErrorRateTable& observational, RateKind kind, Normalization mode) {
  const PairwiseDeltas pd = pairwise_differences(table, kind);
  MetricSuite s;
  s.kind = kind;
  s.normalization = mode;
  s.avg = delta_avg(pd, mode);
  s.max_witness = delta_max_witness(pd);
  s.max = s.max_witness.value;
  s.var = delta_var(pd, mode, &s.warnings);
  s.marg = delta_marg(marginal_tables, kind);
  s.obs = delta_avg(pairwise_differences(observational, kind), mode);
  s.pair_count = pd.entries.size();
  s.excluded_pairs = pd.excluded.size();
  s.partial = pd.partial();
  if (s.partial)
    s.warnings.push_back(std::to_string(s.excluded_pairs) + " pair(s) excluded for undefined " + to_string(kind) +
                         " rates");
  if (table.truncated_rates > 0)
    s.warnings.push_back(std::to_string(table.truncated_rates) + " regression rate(s) truncated to [0, 1]");
  return s;
}

namespace {

std::vector<ErrorRateTable> marginal_tables(const Dataset& ds, Method method, const NuisanceValues& nuisance) {
  std::vector<ErrorRateTable> out;
  out.reserve(ds.protected_count());
  for (std::size_t j = 0; j < ds.protected_count(); ++j)
    out.push_back(rate_table(ds, marginal_grouping(ds, j), method, nuisance));
  return out;
}

}  // namespace

MetricSuite metric_suite(const Dataset& ds, const GroupIndex& gi, Method method, RateKind kind,
                         const NuisanceValues& nuisance, Normalization mode) {
  const ErrorRateTable table = error_rate_table(ds, method, nuisance, gi);
  const auto marginals = marginal_tables(ds, method, nuisance);
  return metric_suite(table, marginals, observational_rate_table(ds, gi.membership), kind, mode);
}

AuditEstimate estimate_audit(const Dataset& ds, const GroupIndex& gi, Method method, const NuisanceValues& nuisance,
                             Normalization mode) {
  AuditEstimate est;
  est.table = error_rate_table(ds, method, nuisance, gi);
  est.marginal_tables = marginal_tables(ds, method, nuisance);
  est.observational = observational_rate_table(ds, gi.membership);
  est.positive = metric_suite(est.table, est.marginal_tables, est.observational, RateKind::positive, mode);
  est.negative = metric_suite(est.table, est.marginal_tables, est.observational, RateKind::negative, mode);
  return est;
}

}  // namespace cfaudit
