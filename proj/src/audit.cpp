#include "cfaudit/audit.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfaudit/error.hpp"
#include "cfaudit/numeric.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

using Json = nlohmann::ordered_json;

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

AuditSettings AuditSettings::from_config(const ConfigMap& c) {
  AuditSettings s;
  s.input = c.get_string("input");
  s.columns.protected_columns = c.get_list("protected");
  s.columns.treatment_column = c.get_string("treatment", s.columns.treatment_column);
  s.columns.outcome_column = c.get_string("outcome", s.columns.outcome_column);
  s.columns.covariate_columns = c.get_list("covariates", {});
  s.columns.score_column = c.get_string("score", s.columns.score_column);
  s.columns.score_threshold = c.get_double("threshold", s.columns.score_threshold);
  s.columns.validate();
  s.method = parse_method(c.get_string("method", "weighted-glm"));
  if (s.method == Method::weighted_true)
    throw ConfigError("weighted-true is only available in simulation studies");
  s.nuisance.folds = static_cast<std::size_t>(c.get_int("folds", static_cast<std::int64_t>(s.nuisance.folds)));
  s.nuisance.clamp_lo = c.get_double("clamp_lo", s.nuisance.clamp_lo);
  s.nuisance.clamp_hi = c.get_double("clamp_hi", s.nuisance.clamp_hi);
  clamp_propensity(Eigen::VectorXd::Zero(0), s.nuisance.clamp_lo, s.nuisance.clamp_hi);
  s.nuisance.ensemble.forest.n_trees =
      static_cast<int>(c.get_int("ensemble.trees", s.nuisance.ensemble.forest.n_trees));
  s.nuisance.ensemble.inner_folds = static_cast<int>(c.get_int("ensemble.inner_folds", s.nuisance.ensemble.inner_folds));
  s.permutations = static_cast<std::size_t>(c.get_int("permutations", static_cast<std::int64_t>(s.permutations)));
  s.bootstrap = static_cast<std::size_t>(c.get_int("bootstrap", static_cast<std::int64_t>(s.bootstrap)));
  if (s.permutations > 0 && s.permutations < 100) throw ConfigError("permutations must be 0 or at least 100");
  if (s.bootstrap > 0 && s.bootstrap < 200) throw ConfigError("bootstrap must be 0 or at least 200");
  s.alpha = c.get_double("alpha", s.alpha);
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  s.resample = ResampleRule::parse(c.get_string("resample", "power:0.75"));
  s.refit = c.get_bool("refit", s.refit);
  s.seed = c.get_uint("seed", s.seed);
  if (c.get_bool("paper_literal_normalization", false)) s.normalization = Normalization::paper_literal;
  if (c.has("kinds")) {
    s.kinds.clear();
    for (const auto& k : c.get_list("kinds")) s.kinds.push_back(parse_rate_kind(k));
    if (s.kinds.empty()) throw ConfigError("kinds must name at least one error-rate kind");
  }
  return s;
}

namespace {

std::vector<std::optional<double>> audit_vector(const AuditEstimate& est) {
  std::vector<std::optional<double>> out;
  for (double v : metric_vector(est)) out.emplace_back(v);
  for (RateKind kind : {RateKind::positive, RateKind::negative})
    for (const auto& row : est.table.rows) out.push_back(row.rate(kind).estimate);
  return out;
}

IntervalSet intervals_for(double theta, std::vector<double> estimates, std::size_t m, std::size_t n, double alpha) {
  const BootstrapResult br = make_bootstrap_result(theta, std::move(estimates), m, n);
  return {br.se, ci_t_interval(br, alpha), ci_normal(br, alpha), ci_percentile(br, alpha), br.B};
}

}  // namespace

AuditReport run_audit(const AuditSettings& settings, Execution exec) {
  return run_audit(load_dataset_file(settings.input, settings.columns), settings, exec);
}

AuditReport run_audit(const Dataset& ds, const AuditSettings& settings, Execution exec) {
  AuditReport report;
  report.settings = settings;
  report.records = ds.size();
  report.rejected_rows = ds.rejected_rows();
  const GroupIndex gi = enumerate_groups(ds);
  for (std::size_t g = 0; g < gi.size(); ++g) report.group_labels.push_back(gi.label(ds, g));
  report.group_counts = gi.counts;

  const std::uint64_t fit_seed = derive_seed(settings.seed, {0});
  const NuisanceValues nuisance = fit_nuisance(ds, settings.method, settings.nuisance, fit_seed);
  report.estimate = estimate_audit(ds, gi, settings.method, nuisance, settings.normalization);
  if (nuisance.propensity) {
    report.propensity = *nuisance.propensity;
    report.propensity->pi.resize(0);
  }

  MetricSpec spec;
  spec.method = settings.method;
  spec.normalization = settings.normalization;
  spec.nuisance = settings.nuisance;
  spec.refit = settings.refit;
  if (!settings.refit) spec.fixed = nuisance;

  const auto observed = metric_vector(report.estimate);
  report.metrics.resize(observed.size());
  for (RateKind kind : {RateKind::positive, RateKind::negative})
    for (MetricId id : {MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs}) {
      auto& mi = report.metrics[metric_slot(kind, id)];
      mi.kind = kind;
      mi.metric = id;
      mi.estimate = observed[metric_slot(kind, id)];
    }
  for (RateKind kind : {RateKind::positive, RateKind::negative})
    for (std::size_t g = 0; g < gi.size(); ++g)
      report.group_rates.push_back({g, kind, report.estimate.table.rate(g, kind), std::nullopt});

  if (settings.permutations > 0) {
    const ReplicateRun run =
        permutation_replicates(ds, settings.permutations, derive_seed(settings.seed, {1}), metric_statistic(spec), exec);
    report.permutation_failures = run.failed_attempts;
    report.reference.assign(observed.size(), {});
    for (const auto& v : run.values)
      for (std::size_t k = 0; k < observed.size(); ++k) report.reference[k].push_back(*v[k]);
    for (std::size_t k = 0; k < observed.size(); ++k)
      report.metrics[k].u_value = u_value(report.reference[k], observed[k]);
  }

  if (settings.bootstrap > 0) {
    if (ds.size() < 50) throw ConfigError("rescaled bootstrap needs at least 50 records");
    const std::size_t m = resample_size(ds.size(), settings.resample);
    report.resample_size = m;
    const ReplicateStatistic statistic = [&spec](const Dataset& rep, std::span<const std::size_t> rows,
                                                 std::uint64_t seed) {
      return audit_vector(evaluate_replicate(rep, rows, spec, seed));
    };
    const ReplicateRun run =
        bootstrap_replicates(ds, settings.bootstrap, m, derive_seed(settings.seed, {2}), statistic, exec);
    report.bootstrap_failures = run.failed_attempts;

    const auto theta = audit_vector(report.estimate);
    auto collect = [&](std::size_t k) {
      std::vector<double> values;
      for (const auto& v : run.values)
        if (v[k]) values.push_back(*v[k]);
      return values;
    };
    for (std::size_t k = 0; k < observed.size(); ++k)
      report.metrics[k].intervals = intervals_for(observed[k], collect(k), m, ds.size(), settings.alpha);
    for (std::size_t r = 0; r < report.group_rates.size(); ++r) {
      const std::size_t k = observed.size() + r;
      auto values = collect(k);
      if (theta[k] && values.size() >= 2)
        report.group_rates[r].intervals = intervals_for(*theta[k], std::move(values), m, ds.size(), settings.alpha);
    }
  }
  return report;
}

namespace {

Json number_or_null(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json interval_json(const ConfidenceInterval& ci) {
  Json j;
  j["lo"] = ci.lo;
  j["hi"] = ci.hi;
  j["truncated_lo"] = ci.truncated_lo;
  j["level"] = ci.level;
  return j;
}

Json intervals_json(const std::optional<IntervalSet>& s) {
  if (!s) return nullptr;
  Json j;
  j["se"] = s->se;
  j["resamples"] = s->resamples;
  j["t"] = interval_json(s->t);
  j["normal"] = interval_json(s->normal);
  j["percentile"] = interval_json(s->percentile);
  return j;
}

Json suite_json(const MetricSuite& s, const std::vector<std::string>& labels) {
  Json j;
  for (MetricId id : {MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs})
    j[to_string(id)] = s.value(id);
  j["normalization"] = to_string(s.normalization);
  j["pair_count"] = s.pair_count;
  j["excluded_pairs"] = s.excluded_pairs;
  j["partial"] = s.partial;
  j["max_witness"] = {labels.at(s.max_witness.first), labels.at(s.max_witness.second)};
  j["warnings"] = s.warnings;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'", "output");
  out << text;
}

std::string opt_field(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string interval_fields(const std::optional<IntervalSet>& s) {
  if (!s) return ",,,,,,,";
  return format_number(s->se) + "," + format_number(s->t.lo) + "," + format_number(s->t.hi) + "," +
         format_number(s->t.truncated_lo) + "," + format_number(s->normal.lo) + "," + format_number(s->normal.hi) +
         "," + format_number(s->percentile.lo) + "," + format_number(s->percentile.hi);
}

bool kind_selected(const AuditSettings& s, RateKind kind) {
  return std::find(s.kinds.begin(), s.kinds.end(), kind) != s.kinds.end();
}

}  // namespace

void write_audit_outputs(const AuditReport& report, const ConfigMap& config, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const AuditSettings& s = report.settings;

  Json root;
  root["tool"] = "cfaudit";
  root["version"] = kToolVersion;
  root["command"] = "audit";
  Json cfg_echo = Json::object();
  for (const auto& [key, value] : config.values()) cfg_echo[key] = value;
  root["config"] = cfg_echo;
  Json resolved;
  resolved["method"] = to_string(s.method);
  resolved["seed"] = s.seed;
  resolved["permutations"] = s.permutations;
  resolved["bootstrap"] = s.bootstrap;
  resolved["alpha"] = s.alpha;
  resolved["resample"] = s.resample.to_string();
  resolved["resample_size"] = report.resample_size;
  resolved["refit"] = s.refit;
  resolved["normalization"] = to_string(s.normalization);
  resolved["folds"] = s.nuisance.folds;
  resolved["clamp"] = {s.nuisance.clamp_lo, s.nuisance.clamp_hi};
  root["resolved"] = resolved;

  Json data;
  data["records"] = report.records;
  data["rejected_rows"] = report.rejected_rows;
  data["groups"] = Json::array();
  for (std::size_t g = 0; g < report.group_labels.size(); ++g)
    data["groups"].push_back({{"label", report.group_labels[g]}, {"count", report.group_counts[g]}});
  root["data"] = data;

  const auto& labels = report.group_labels;
  Json kinds = Json::object();
  for (RateKind kind : {RateKind::positive, RateKind::negative}) {
    if (!kind_selected(s, kind)) continue;
    Json k;
    Json rates = Json::array();
    for (const auto& gr : report.group_rates) {
      if (gr.kind != kind) continue;
      const auto& row = report.estimate.table.rows[gr.group];
      Json r;
      r["group"] = labels[gr.group];
      r["estimate"] = number_or_null(gr.rate.estimate);
      r["numerator"] = gr.rate.numerator;
      r["denominator"] = gr.rate.denominator;
      r["untreated"] = row.untreated;
      r["intervals"] = intervals_json(gr.intervals);
      rates.push_back(r);
    }
    k["group_rates"] = rates;
    k["suite"] = suite_json(report.estimate.suite(kind), labels);
    Json metrics = Json::array();
    for (const auto& mi : report.metrics) {
      if (mi.kind != kind) continue;
      Json m;
      m["metric"] = to_string(mi.metric);
      m["estimate"] = mi.estimate;
      m["u_value"] = number_or_null(mi.u_value);
      m["intervals"] = intervals_json(mi.intervals);
      metrics.push_back(m);
    }
    k["metrics"] = metrics;
    kinds[to_string(kind)] = k;
  }
  root["results"] = kinds;

  Json diag;
  Json undefined = Json::array();
  for (std::size_t g = 0; g < labels.size(); ++g)
    for (RateKind kind : {RateKind::positive, RateKind::negative})
      if (!report.estimate.table.rate(g, kind).defined())
        undefined.push_back({{"group", labels[g]}, {"kind", to_string(kind)}});
  diag["undefined_rates"] = undefined;
  Json weights = Json::array();
  for (std::size_t g = 0; g < labels.size(); ++g) {
    const auto& row = report.estimate.table.rows[g];
    weights.push_back({{"group", labels[g]}, {"min", row.min_weight}, {"max", row.max_weight}});
  }
  if (report.estimate.table.kind == TableKind::counterfactual_weighted) diag["weight_ranges"] = weights;
  if (report.propensity) {
    diag["propensity_clamped"] = report.propensity->clamped_count;
    diag["propensity_separated"] = report.propensity->separated;
    diag["positivity_delta"] = report.propensity->positivity_delta();
  }
  diag["regression_rates_truncated"] = report.estimate.table.truncated_rates;
  diag["permutation_redraws"] = report.permutation_failures;
  diag["bootstrap_redraws"] = report.bootstrap_failures;
  root["diagnostics"] = diag;

  write_text(fs::path(dir) / "report.json", root.dump(2) + "\n");

  std::string metrics_csv =
      "kind,metric,estimate,u_value,se,t_lo,t_hi,t_lo_truncated,normal_lo,normal_hi,percentile_lo,percentile_hi\n";
  for (const auto& mi : report.metrics) {
    if (!kind_selected(s, mi.kind)) continue;
    metrics_csv += to_string(mi.kind) + "," + to_string(mi.metric) + "," + format_number(mi.estimate) + "," +
                   opt_field(mi.u_value) + "," + interval_fields(mi.intervals) + "\n";
  }
  write_text(fs::path(dir) / "plot_metrics.csv", metrics_csv);

  std::string rates_csv =
      "kind,group,count,estimate,se,t_lo,t_hi,t_lo_truncated,normal_lo,normal_hi,percentile_lo,percentile_hi\n";
  for (const auto& gr : report.group_rates) {
    if (!kind_selected(s, gr.kind)) continue;
    rates_csv += to_string(gr.kind) + "," + csv_field(labels[gr.group]) + "," + std::to_string(report.group_counts[gr.group]) +
                 "," + opt_field(gr.rate.estimate) + "," + interval_fields(gr.intervals) + "\n";
  }
  write_text(fs::path(dir) / "plot_group_rates.csv", rates_csv);

  std::string ref_csv = "kind,metric,index,value\n";
  for (std::size_t k = 0; k < report.reference.size(); ++k) {
    const auto& mi = report.metrics[k];
    if (!kind_selected(s, mi.kind)) continue;
    for (std::size_t i = 0; i < report.reference[k].size(); ++i)
      ref_csv += to_string(mi.kind) + "," + to_string(mi.metric) + "," + std::to_string(i) + "," +
                 format_number(report.reference[k][i]) + "\n";
  }
  write_text(fs::path(dir) / "reference_samples.csv", ref_csv);
}

}  // namespace cfaudit
