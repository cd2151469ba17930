#include "cfaudit/estimators.hpp"

#include <algorithm>
#include <limits>

#include "cfaudit/error.hpp"

namespace cfaudit {

std::string to_string(RateKind kind) { return kind == RateKind::positive ? "positive" : "negative"; }

RateKind parse_rate_kind(const std::string& name) {
  if (name == "positive" || name == "fpr") return RateKind::positive;
  if (name == "negative" || name == "fnr") return RateKind::negative;
  throw ConfigError("unknown error-rate kind '" + name + "'");
}

std::string to_string(TableKind kind) {
  switch (kind) {
    case TableKind::counterfactual_weighted: return "counterfactual-weighted";
    case TableKind::counterfactual_regression: return "counterfactual-regression";
    case TableKind::observational: return "observational";
    case TableKind::truth: return "truth";
  }
  return "unknown";
}

double Rate::value() const {
  if (!estimate) throw InfeasibleError("undefined_rate", "error rate is undefined (empty denominator)");
  return *estimate;
}

Rate Rate::ratio(double numerator, double denominator) {
  Rate r;
  r.numerator = numerator;
  r.denominator = denominator;
  if (denominator > 0.0) r.estimate = numerator / denominator;
  return r;
}

std::size_t ErrorRateTable::defined_count(RateKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [kind](const GroupRates& g) { return g.rate(kind).defined(); }));
}

namespace {

struct Sums {
  double fpr_num = 0.0, fpr_den = 0.0, fnr_num = 0.0, fnr_den = 0.0;
  std::size_t count = 0, untreated = 0;
  double min_w = std::numeric_limits<double>::infinity();
  double max_w = 0.0;
};

ErrorRateTable finish(std::vector<Sums> sums, TableKind kind) {
  ErrorRateTable t;
  t.kind = kind;
  t.rows.reserve(sums.size());
  for (const Sums& s : sums) {
    GroupRates g;
    g.fpr = Rate::ratio(s.fpr_num, s.fpr_den);
    g.fnr = Rate::ratio(s.fnr_num, s.fnr_den);
    g.count = s.count;
    g.untreated = s.untreated;
    g.min_weight = s.untreated ? s.min_w : 0.0;
    g.max_weight = s.max_w;
    t.rows.push_back(g);
  }
  return t;
}

void check_grouping(const Dataset& ds, const Grouping& grouping) {
  if (grouping.group_of_row.size() != ds.size()) throw DataError("shape", "grouping does not match the dataset");
}

Grouping single_group(const Dataset& ds, const GroupKey& group) {
  if (group.levels.size() != ds.protected_count()) throw DataError("shape", "group key has the wrong width");
  Grouping g;
  g.group_count = 2;
  g.group_of_row.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.protected_row(i);
    g.group_of_row[i] = std::equal(row.begin(), row.end(), group.levels.begin()) ? 1 : 0;
  }
  return g;
}

}  // namespace

ErrorRateTable weighted_rate_table(const Dataset& ds, const Grouping& grouping, const Eigen::VectorXd& pi) {
  check_grouping(ds, grouping);
  if (static_cast<std::size_t>(pi.size()) != ds.size()) throw DataError("shape", "propensity vector has the wrong length");
  std::vector<Sums> sums(grouping.group_count);
  const auto& d = ds.treatment();
  const auto& y = ds.outcome();
  const auto& s = ds.score();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Sums& g = sums[static_cast<std::size_t>(grouping.group_of_row[i])];
    ++g.count;
    if (d[i]) continue;
    const double w = 1.0 / (1.0 - pi[static_cast<Eigen::Index>(i)]);
    ++g.untreated;
    g.min_w = std::min(g.min_w, w);
    g.max_w = std::max(g.max_w, w);
    if (y[i]) {
      g.fnr_den += w;
      if (!s[i]) g.fnr_num += w;
    } else {
      g.fpr_den += w;
      if (s[i]) g.fpr_num += w;
    }
  }
  return finish(std::move(sums), TableKind::counterfactual_weighted);
}

ErrorRateTable regression_rate_table(const Dataset& ds, const Grouping& grouping, const OutcomePredictions& pred) {
  check_grouping(ds, grouping);
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (pred.mu0_at_score1.size() != n || pred.mu0_at_score0.size() != n || pred.mu0_star.size() != n)
    throw DataError("shape", "outcome predictions have the wrong length");
  std::vector<Sums> sums(grouping.group_count);
  const auto& d = ds.treatment();
  const auto& s = ds.score();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    Sums& g = sums[static_cast<std::size_t>(grouping.group_of_row[i])];
    ++g.count;
    if (!d[i]) ++g.untreated;
    if (s[i]) g.fpr_num += 1.0 - pred.mu0_at_score1[k];
    g.fpr_den += 1.0 - pred.mu0_star[k];
    if (!s[i]) g.fnr_num += pred.mu0_at_score0[k];
    g.fnr_den += pred.mu0_star[k];
  }
  ErrorRateTable t = finish(std::move(sums), TableKind::counterfactual_regression);
  for (auto& row : t.rows)
    for (Rate* r : {&row.fpr, &row.fnr})
      if (r->estimate && (*r->estimate < 0.0 || *r->estimate > 1.0)) {
        r->estimate = std::clamp(*r->estimate, 0.0, 1.0);
        ++t.truncated_rates;
      }
  return t;
}

ErrorRateTable counting_rate_table(const Dataset& ds, const Grouping& grouping, std::span<const std::uint8_t> reference,
                                   TableKind kind) {
  check_grouping(ds, grouping);
  if (reference.size() != ds.size()) throw DataError("shape", "reference outcomes have the wrong length");
  std::vector<Sums> sums(grouping.group_count);
  const auto& d = ds.treatment();
  const auto& s = ds.score();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Sums& g = sums[static_cast<std::size_t>(grouping.group_of_row[i])];
    ++g.count;
    if (!d[i]) ++g.untreated;
    if (reference[i]) {
      g.fnr_den += 1.0;
      if (!s[i]) g.fnr_num += 1.0;
    } else {
      g.fpr_den += 1.0;
      if (s[i]) g.fpr_num += 1.0;
    }
  }
  return finish(std::move(sums), kind);
}

ErrorRateTable observational_rate_table(const Dataset& ds, const Grouping& grouping) {
  return counting_rate_table(ds, grouping, ds.outcome(), TableKind::observational);
}

Rate counterfactual_fpr(const Dataset& ds, const PropensityEstimate& pe, const GroupKey& group) {
  return weighted_rate_table(ds, single_group(ds, group), pe.pi).rows[1].fpr;
}

Rate counterfactual_fnr(const Dataset& ds, const PropensityEstimate& pe, const GroupKey& group) {
  return weighted_rate_table(ds, single_group(ds, group), pe.pi).rows[1].fnr;
}

Rate regression_cfpr(const Dataset& ds, const OutcomePredictions& pred, const GroupKey& group) {
  return regression_rate_table(ds, single_group(ds, group), pred).rows[1].fpr;
}

Rate regression_cfnr(const Dataset& ds, const OutcomePredictions& pred, const GroupKey& group) {
  return regression_rate_table(ds, single_group(ds, group), pred).rows[1].fnr;
}

Rate regression_cfpr(const Dataset& ds, const OutcomeRegressions& reg, const GroupKey& group) {
  return regression_cfpr(ds, predict_outcome_regressions(reg, ds), group);
}

Rate regression_cfnr(const Dataset& ds, const OutcomeRegressions& reg, const GroupKey& group) {
  return regression_cfnr(ds, predict_outcome_regressions(reg, ds), group);
}

std::pair<Rate, Rate> observational_rates(const Dataset& ds, const GroupKey& group) {
  const auto t = observational_rate_table(ds, single_group(ds, group));
  return {t.rows[1].fpr, t.rows[1].fnr};
}

ErrorRateTable rate_table(const Dataset& ds, const Grouping& grouping, Method method, const NuisanceValues& nuisance) {
  switch (method) {
    case Method::weighted_glm:
    case Method::weighted_ensemble:
    case Method::weighted_true:
      if (!nuisance.propensity) throw ConfigError("weighted estimation needs a propensity estimate");
      return weighted_rate_table(ds, grouping, nuisance.propensity->pi);
    case Method::regression:
      if (!nuisance.outcome) throw ConfigError("regression estimation needs outcome regressions");
      return regression_rate_table(ds, grouping, *nuisance.outcome);
    case Method::observational:
      return observational_rate_table(ds, grouping);
  }
  throw ConfigError("unknown estimation method");
}

ErrorRateTable error_rate_table(const Dataset& ds, Method method, const NuisanceValues& nuisance, const GroupIndex& gi) {
  ErrorRateTable t = rate_table(ds, gi.membership, method, nuisance);
  if (t.defined_count(RateKind::positive) == 0 && t.defined_count(RateKind::negative) == 0)
    throw InfeasibleError("audit_infeasible", "every group has an undefined error rate; consider merging sparse groups");
  return t;
}

}  // namespace cfaudit
