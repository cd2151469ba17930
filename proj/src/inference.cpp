#include "cfaudit/inference.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/numeric.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

namespace {

struct Draw {
  Dataset data;
  std::vector<std::size_t> rows;
};

template <typename MakeDraw>
ReplicateRun run_replicates(std::size_t count, std::uint64_t seed, const ReplicateStatistic& statistic, Execution exec,
                            MakeDraw make_draw) {
  ReplicateRun run;
  run.values.resize(count);
  std::vector<std::size_t> failures(count, 0);
  const std::size_t budget = 4 * count;  // at most 5 * count draws in total
  std::atomic<std::size_t> failed{0};

  for_each_index(count, exec, [&](std::size_t r) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (failed.load() > budget) break;
      Rng rng = make_rng(seed, {r, attempt});
      const Draw draw = make_draw(rng);
      try {
        run.values[r] = statistic(draw.data, draw.rows, derive_seed(seed, {r, attempt, 1}));
        return;
      } catch (const InfeasibleError&) {
      } catch (const DataError&) {
      }
      ++failures[r];
      ++failed;
    }
  });

  run.failed_attempts = std::accumulate(failures.begin(), failures.end(), std::size_t{0});
  if (run.failed_attempts > budget)
    throw InfeasibleError("replicates_exhausted", "more than " + std::to_string(5 * count) +
                                                      " draws needed to obtain " + std::to_string(count) +
                                                      " feasible replicates");
  return run;
}

MetricSpec prepared(const Dataset& ds, MetricSpec spec, std::uint64_t seed) {
  const bool carried = !spec.refit || spec.method == Method::weighted_true;
  if (carried && !spec.fixed) {
    if (spec.method == Method::weighted_true) throw ConfigError("weighted-true needs the generating propensity");
    spec.fixed = fit_nuisance(ds, spec.method, spec.nuisance, seed);
  }
  return spec;
}

}  // namespace

ReplicateRun permutation_replicates(const Dataset& ds, std::size_t count, std::uint64_t seed,
                                    const ReplicateStatistic& statistic, Execution exec) {
  std::vector<std::size_t> identity(ds.size());
  std::iota(identity.begin(), identity.end(), 0);
  return run_replicates(count, seed, statistic, exec, [&](Rng& rng) {
    std::vector<std::size_t> perm = identity;
    shuffle(perm.begin(), perm.end(), rng);
    return Draw{ds.with_protected_from(perm), identity};
  });
}

ReplicateRun bootstrap_replicates(const Dataset& ds, std::size_t count, std::size_t m, std::uint64_t seed,
                                  const ReplicateStatistic& statistic, Execution exec) {
  if (ds.size() == 0) throw DataError("empty_input", "cannot resample an empty dataset");
  return run_replicates(count, seed, statistic, exec, [&](Rng& rng) {
    std::vector<std::size_t> rows(m);
    for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, ds.size()));
    Dataset data = ds.subset(rows);
    return Draw{std::move(data), std::move(rows)};
  });
}

std::size_t metric_slot(RateKind kind, MetricId id) {
  return (kind == RateKind::positive ? 0 : 5) + static_cast<std::size_t>(id);
}

std::vector<double> metric_vector(const AuditEstimate& est) {
  std::vector<double> out;
  out.reserve(10);
  for (RateKind kind : {RateKind::positive, RateKind::negative})
    for (MetricId id : {MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs})
      out.push_back(est.suite(kind).value(id));
  return out;
}

AuditEstimate evaluate_replicate(const Dataset& replicate, std::span<const std::size_t> source_rows,
                                 const MetricSpec& spec, std::uint64_t seed) {
  NuisanceValues nuisance;
  if (spec.method != Method::observational) {
    if (spec.refit && spec.method != Method::weighted_true) {
      nuisance = fit_nuisance(replicate, spec.method, spec.nuisance, seed);
    } else {
      if (!spec.fixed) throw ConfigError("no-refit evaluation needs precomputed nuisance values");
      nuisance = spec.fixed->subset(source_rows);
    }
  }
  return estimate_audit(replicate, enumerate_groups(replicate), spec.method, nuisance, spec.normalization);
}

ReplicateStatistic metric_statistic(const MetricSpec& spec) {
  return [spec](const Dataset& replicate, std::span<const std::size_t> rows, std::uint64_t seed) {
    const auto values = metric_vector(evaluate_replicate(replicate, rows, spec, seed));
    return std::vector<std::optional<double>>(values.begin(), values.end());
  };
}

ReferenceDistribution permutation_reference(const Dataset& ds, const MetricSpec& spec, RateKind kind, MetricId metric,
                                            std::size_t permutations, std::uint64_t seed, Execution exec) {
  if (permutations < 100) throw ConfigError("permutation reference needs at least 100 permutations");
  const MetricSpec ready = prepared(ds, spec, derive_seed(seed, {0xFFFF}));
  const std::size_t slot = metric_slot(kind, metric);
  const ReplicateRun run = permutation_replicates(ds, permutations, seed, metric_statistic(ready), exec);

  ReferenceDistribution ref;
  ref.kind = kind;
  ref.metric = metric;
  ref.seed = seed;
  ref.refit = spec.refit;
  ref.failed_attempts = run.failed_attempts;
  ref.samples.reserve(permutations);
  for (const auto& v : run.values) ref.samples.push_back(*v[slot]);
  return ref;
}

double u_value(std::span<const double> samples, double observed) {
  if (samples.empty()) throw ConfigError("u-value needs a non-empty reference distribution");
  const auto below = std::count_if(samples.begin(), samples.end(), [observed](double s) { return s < observed; });
  return static_cast<double>(below) / static_cast<double>(samples.size());
}

double u_value(const ReferenceDistribution& ref, double observed) { return u_value(ref.samples, observed); }

ResampleRule ResampleRule::parse(const std::string& text) {
  ResampleRule rule;
  auto number_after = [&](std::size_t pos, auto& out) {
    const char* first = text.data() + pos;
    const char* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last) throw ConfigError("bad resample rule '" + text + "'");
  };
  if (text == "full") {
    rule.kind = Kind::full;
  } else if (text.rfind("power:", 0) == 0) {
    rule.kind = Kind::power;
    number_after(6, rule.exponent);
    if (!(rule.exponent > 0.0 && rule.exponent < 1.0)) throw ConfigError("resample exponent must lie in (0, 1)");
  } else if (text.rfind("fixed:", 0) == 0) {
    rule.kind = Kind::fixed;
    number_after(6, rule.size);
  } else {
    throw ConfigError("bad resample rule '" + text + "' (expected power:<e>, fixed:<m> or full)");
  }
  return rule;
}

std::string ResampleRule::to_string() const {
  switch (kind) {
    case Kind::power: {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, exponent);
      return "power:" + std::string(buf, res.ptr);
    }
    case Kind::fixed: return "fixed:" + std::to_string(size);
    case Kind::full: return "full";
  }
  return "unknown";
}

std::size_t resample_size(std::size_t n, const ResampleRule& rule) {
  std::size_t m = 0;
  switch (rule.kind) {
    case ResampleRule::Kind::full: return n;
    case ResampleRule::Kind::fixed: m = rule.size; break;
    case ResampleRule::Kind::power: {
      const long double p = std::pow(static_cast<long double>(n), static_cast<long double>(rule.exponent));
      // exact powers (n = 16 -> 8) must not be pushed up by rounding noise
      m = static_cast<std::size_t>(std::ceil(p * (1.0L - 1e-15L)));
      break;
    }
  }
  if (m == 0 || m >= n) throw ConfigError("resample size must satisfy 0 < m < n");
  return m;
}

BootstrapResult make_bootstrap_result(double theta_n, std::vector<double> resample_estimates, std::size_t m,
                                      std::size_t n) {
  BootstrapResult br;
  br.theta_n = theta_n;
  br.m = m;
  br.n = n;
  br.B = resample_estimates.size();
  const double root_m = std::sqrt(static_cast<double>(m));
  br.rescaled.reserve(br.B);
  for (double e : resample_estimates) br.rescaled.push_back(root_m * (e - theta_n));
  br.resample_estimates = std::move(resample_estimates);
  br.se = std::sqrt(sample_variance(br.rescaled) / static_cast<double>(n));
  return br;
}

BootstrapResult rescaled_bootstrap(const Dataset& ds, const MetricSpec& spec, RateKind kind, MetricId metric,
                                   std::size_t B, const ResampleRule& rule, std::uint64_t seed, Execution exec) {
  if (B < 200) throw ConfigError("rescaled bootstrap needs at least 200 resamples");
  if (ds.size() < 50) throw ConfigError("rescaled bootstrap needs at least 50 records");
  const std::size_t m = resample_size(ds.size(), rule);
  const MetricSpec ready = prepared(ds, spec, derive_seed(seed, {0xFFFF}));
  const std::size_t slot = metric_slot(kind, metric);

  std::vector<std::size_t> identity(ds.size());
  std::iota(identity.begin(), identity.end(), 0);
  const double theta = metric_vector(evaluate_replicate(ds, identity, ready, derive_seed(seed, {0xFFFF})))[slot];

  const ReplicateRun run = bootstrap_replicates(ds, B, m, seed, metric_statistic(ready), exec);
  std::vector<double> estimates;
  estimates.reserve(B);
  for (const auto& v : run.values) estimates.push_back(*v[slot]);
  BootstrapResult br = make_bootstrap_result(theta, std::move(estimates), m, ds.size());
  br.seed = seed;
  br.failed_attempts = run.failed_attempts;
  return br;
}

std::string to_string(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::t: return "t";
    case IntervalMethod::normal: return "normal";
    case IntervalMethod::percentile: return "percentile";
  }
  return "unknown";
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

ConfidenceInterval make_interval(IntervalMethod method, double alpha, double lo, double hi) {
  return {method, 1.0 - alpha, lo, hi, std::max(lo, 0.0)};
}

}  // namespace

ConfidenceInterval ci_t_interval(const BootstrapResult& br, double alpha) {
  check_alpha(alpha);
  if (!(br.se > 0.0) || br.resample_estimates.empty())
    return make_interval(IntervalMethod::t, alpha, br.theta_n, br.theta_n);
  std::vector<double> t_star;
  t_star.reserve(br.resample_estimates.size());
  for (double e : br.resample_estimates) t_star.push_back((e - br.theta_n) / br.se);
  std::sort(t_star.begin(), t_star.end());
  return make_interval(IntervalMethod::t, alpha, br.theta_n - br.se * quantile_sorted(t_star, 1.0 - alpha / 2.0),
                       br.theta_n - br.se * quantile_sorted(t_star, alpha / 2.0));
}

ConfidenceInterval ci_normal(const BootstrapResult& br, double alpha) {
  check_alpha(alpha);
  const double half = normal_quantile(1.0 - alpha / 2.0) * br.se;
  return make_interval(IntervalMethod::normal, alpha, br.theta_n - half, br.theta_n + half);
}

ConfidenceInterval ci_percentile(const BootstrapResult& br, double alpha) {
  check_alpha(alpha);
  if (br.rescaled.empty() || br.m == 0)
    return make_interval(IntervalMethod::percentile, alpha, br.theta_n, br.theta_n);
  std::vector<double> sorted = br.rescaled;
  std::sort(sorted.begin(), sorted.end());
  const double root_m = std::sqrt(static_cast<double>(br.m));
  return make_interval(IntervalMethod::percentile, alpha, br.theta_n + quantile_sorted(sorted, alpha / 2.0) / root_m,
                       br.theta_n + quantile_sorted(sorted, 1.0 - alpha / 2.0) / root_m);
}

}  // namespace cfaudit
