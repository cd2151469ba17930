#include "cfaudit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfaudit/audit.hpp"
#include "cfaudit/config.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/random.hpp"
#include "cfaudit/simulation.hpp"

namespace cfaudit {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
  bool paper_literal = false;
  bool no_refit = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (key = value)")->required();
  cmd->add_option("--seed", f.seed, "Override the configured seed");
  cmd->add_option("--out", f.out, "Output directory (default: out)");
  cmd->add_option("--threads", f.threads, "Worker threads (default: all cores)");
  cmd->add_flag("--paper-literal-normalization", f.paper_literal, "Divide pair sums by the number of groups");
  cmd->add_flag("--no-refit", f.no_refit, "Keep nuisance values fixed across replicates (diagnostics)");
}

/// Settings that change where or how fast output is produced, not what it contains.
const std::set<std::string> kPlacementKeys{"out", "threads"};

void check_keys(const ConfigMap& cfg, const std::set<std::string>& known, const std::vector<std::string>& prefixes) {
  for (const auto& [key, value] : cfg.values()) {
    if (known.count(key) || kPlacementKeys.count(key)) continue;
    const bool prefixed = std::any_of(prefixes.begin(), prefixes.end(),
                                      [&key](const std::string& p) { return key.rfind(p, 0) == 0; });
    if (!prefixed) throw ConfigError("unknown setting '" + key + "'");
  }
}

struct Resolved {
  ConfigMap cfg;
  ConfigMap echo;
  std::string out;
  fs::path base;  // directory of the config file
};

Resolved resolve(const CommonFlags& f) {
  Resolved r;
  r.cfg = ConfigMap::parse_file(f.config);
  if (f.seed) r.cfg.set("seed", std::to_string(*f.seed));
  if (f.paper_literal) r.cfg.set("paper_literal_normalization", "true");
  if (f.no_refit) r.cfg.set("refit", "false");
  r.out = !f.out.empty() ? f.out : r.cfg.get_string("out", "out");
  const int threads = f.threads > 0 ? f.threads : static_cast<int>(r.cfg.get_int("threads", 0));
  if (threads < 0) throw ConfigError("threads must be non-negative");
  set_thread_count(threads);
  r.base = fs::path(f.config).parent_path();
  for (const auto& [key, value] : r.cfg.values())
    if (!kPlacementKeys.count(key)) r.echo.set(key, value);
  return r;
}

std::string resolve_path(const fs::path& base, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() || base.empty() ? p.string() : (base / p).string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'", "output");
  out << text;
}

Json manifest(const std::string& command, const ConfigMap& echo, const std::vector<std::string>& files) {
  Json j;
  j["tool"] = "cfaudit";
  j["version"] = kToolVersion;
  j["command"] = command;
  Json cfg = Json::object();
  for (const auto& [key, value] : echo.values()) cfg[key] = value;
  j["config"] = cfg;
  j["files"] = files;
  return j;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// ---- audit ----

int cmd_audit(const CommonFlags& f, std::ostream& out) {
  Resolved r = resolve(f);
  check_keys(r.cfg,
             {"input", "protected", "treatment", "outcome", "covariates", "score", "threshold", "method", "folds",
              "clamp_lo", "clamp_hi", "ensemble.trees", "ensemble.inner_folds", "permutations", "bootstrap", "alpha",
              "resample", "refit", "seed", "paper_literal_normalization", "kinds"},
             {});
  AuditSettings settings = AuditSettings::from_config(r.cfg);
  settings.input = resolve_path(r.base, settings.input);
  const AuditReport report = run_audit(settings);
  write_audit_outputs(report, r.echo, r.out);
  const auto& neg = report.estimate.negative;
  out << "audit: " << report.records << " records, " << report.group_labels.size() << " groups; negative avg "
      << format_number(neg.avg) << "; outputs in " << r.out << "\n";
  return exit_ok;
}

// ---- simulate ----

std::string hidden_truth_csv(const GeneratedData& gen) {
  std::string text = "row,y0,y1,pi_true\n";
  for (std::size_t i = 0; i < gen.y0.size(); ++i)
    text += std::to_string(i) + "," + std::to_string(gen.y0[i]) + "," + std::to_string(gen.y1[i]) + "," +
            format_number(gen.pi_true[static_cast<Eigen::Index>(i)]) + "\n";
  return text;
}

std::string dataset_csv(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(os, ds);
  return os.str();
}

std::string audit_template(const std::string& data_file, bool covariates) {
  std::string text = "# audit configuration for " + data_file + "\n";
  text += "input = " + data_file + "\n";
  text += "protected = a1, a2\n";
  text += "treatment = d\noutcome = y\nscore = s\n";
  if (covariates) text += "covariates = x1, x2, x3, x4\n";
  text += "method = weighted-glm\npermutations = 1000\nbootstrap = 1000\nalpha = 0.1\nseed = 1\n";
  return text;
}

const std::set<std::string> kScenarioKeys{"need.majority",     "need.single",         "need.minority",
                                          "opportunity.majority", "opportunity.single", "opportunity.minority",
                                          "strength.m1",       "strength.m2",         "strength.minority",
                                          "majority_y1",       "group_probabilities", "covariate_mean",
                                          "covariate_sd",      "risk_uses_protected", "clip_lo",
                                          "clip_hi",           "score_coefficient",   "forest.trees",
                                          "forest.max_depth",  "forest.min_leaf",     "train_size",
                                          "validation_size"};

int cmd_simulate(const CommonFlags& f, std::ostream& out) {
  Resolved r = resolve(f);
  const std::string kind = r.cfg.get_string("kind", "scenario");
  const std::uint64_t seed = r.cfg.get_uint("seed", 1);
  const auto n = static_cast<std::size_t>(r.cfg.get_int("n"));
  if (n < 1) throw ConfigError("n must be positive");
  fs::create_directories(r.out);
  std::vector<std::string> files;

  if (kind == "scenario") {
    std::set<std::string> known = kScenarioKeys;
    known.insert({"kind", "scenario", "role", "n", "seed", "paper_literal_normalization", "refit"});
    check_keys(r.cfg, known, {});
    const ScenarioConfig sc = ScenarioConfig::from_config(r.cfg);
    const Role role = parse_role(r.cfg.get_string("role", "estimation"));
    const GeneratedData train = generate_scenario_data(sc, Role::train, role == Role::train ? n : sc.n_train,
                                                       derive_seed(seed, {0}));
    GeneratedData gen;
    if (role == Role::train) {
      gen = train;
    } else {
      const RiskModel model = train_risk_model(train, sc, derive_seed(seed, {1}));
      gen = generate_scenario_data(sc, role, n, derive_seed(seed, {2}), &model);
    }
    write_text(fs::path(r.out) / "data.csv", dataset_csv(gen.data));
    write_text(fs::path(r.out) / "hidden_truth.csv", hidden_truth_csv(gen));
    write_text(fs::path(r.out) / "audit.conf", audit_template("data.csv", true));
    files = {"data.csv", "hidden_truth.csv", "audit.conf"};
  } else if (kind == "demo") {
    check_keys(r.cfg,
               {"kind", "panel", "values", "altered", "n", "seed", "fpr_obs", "fnr_obs", "paper_literal_normalization",
                "refit"},
               {"majority.", "m1.", "m2.", "minority."});
    const std::vector<double> values =
        r.cfg.has("values") ? r.cfg.get_doubles("values") : std::vector<double>{r.cfg.get_double("altered", 0.2)};
    for (double v : values) {
      ConfigMap point = r.cfg;
      point.set("altered", format_number(v));
      const DemoConfig dc = DemoConfig::from_config(point);
      // one seed for every point so that only the swept parameter differs
      const GeneratedData gen = generate_demo_data(dc, n, seed);
      const std::string stem = "demo_" + r.cfg.get_string("panel", "A") + "_" + format_number(v);
      write_text(fs::path(r.out) / (stem + ".csv"), dataset_csv(gen.data));
      write_text(fs::path(r.out) / (stem + "_hidden_truth.csv"), hidden_truth_csv(gen));
      files.push_back(stem + ".csv");
      files.push_back(stem + "_hidden_truth.csv");
    }
  } else {
    throw ConfigError("kind must be 'scenario' or 'demo'");
  }
  write_text(fs::path(r.out) / "manifest.json", manifest("simulate", r.echo, files).dump(2) + "\n");
  out << "simulate: wrote " << files.size() << " file(s) to " << r.out << "\n";
  return exit_ok;
}

// ---- replicate ----

constexpr std::array<MetricId, 5> kMetrics{MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs};

std::string slot_name(std::size_t slot) {
  return std::string(slot < 5 ? "pos_" : "neg_") + to_string(kMetrics[slot % 5]);
}

std::string grid_records_csv(const ReplicationGrid& grid, bool bootstrap) {
  std::string text = "scenario,n,method,replicate,feasible,failure";
  for (std::size_t k = 0; k < 10; ++k) text += "," + slot_name(k);
  text += ",se,t_lo,t_hi,normal_lo,normal_hi,percentile_lo,percentile_hi,u_value\n";
  for (const auto& rec : grid.records) {
    text += std::to_string(rec.scenario) + "," + std::to_string(rec.n) + "," + to_string(rec.method) + "," +
            std::to_string(rec.replicate) + "," + (rec.feasible ? "1" : "0") + "," + rec.failure;
    for (RateKind kind : {RateKind::positive, RateKind::negative})
      for (MetricId id : kMetrics)
        text += "," + (rec.feasible ? format_number((kind == RateKind::positive ? rec.positive : rec.negative).value(id))
                                    : std::string());
    if (rec.inference && rec.feasible) {
      const auto& inf = *rec.inference;
      if (bootstrap)
        text += "," + format_number(inf.se) + "," + format_number(inf.t.lo) + "," + format_number(inf.t.hi) + "," +
                format_number(inf.normal.lo) + "," + format_number(inf.normal.hi) + "," +
                format_number(inf.percentile.lo) + "," + format_number(inf.percentile.hi);
      else
        text += ",,,,,,,";
      text += "," + opt_number(inf.u_value);
    } else {
      text += ",,,,,,,,";
    }
    text += "\n";
  }
  return text;
}

std::string grid_summary_csv(const ReplicationGrid& grid) {
  std::string text = "scenario,n,method,reps,infeasible,flagged";
  for (std::size_t k = 0; k < 10; ++k)
    text += "," + slot_name(k) + "_mean," + slot_name(k) + "_q025," + slot_name(k) + "_q975," + slot_name(k) + "_truth";
  text += ",coverage_t,coverage_normal,coverage_percentile,length_t,length_normal,length_percentile,"
          "length_t_truncated,median_u_value\n";
  for (const auto& s : grid.summary) {
    const Truth* truth = nullptr;
    for (const auto& t : grid.truths)
      if (t.scenario == s.scenario) truth = &t.truth;
    text += std::to_string(s.scenario) + "," + std::to_string(s.n) + "," + to_string(s.method) + "," +
            std::to_string(s.reps) + "," + std::to_string(s.infeasible) + "," + (s.flagged ? "1" : "0");
    for (std::size_t k = 0; k < 10; ++k) {
      const RateKind kind = k < 5 ? RateKind::positive : RateKind::negative;
      const bool any = s.infeasible < s.reps;
      text += "," + (any ? format_number(s.mean[k]) : std::string()) + "," +
              (any ? format_number(s.q025[k]) : std::string()) + "," +
              (any ? format_number(s.q975[k]) : std::string()) + "," +
              format_number(truth->suite(kind).value(kMetrics[k % 5]));
    }
    for (std::size_t k = 0; k < 3; ++k) text += "," + (s.coverage ? format_number((*s.coverage)[k]) : std::string());
    for (std::size_t k = 0; k < 3; ++k)
      text += "," + (s.mean_length ? format_number((*s.mean_length)[k]) : std::string());
    text += "," + opt_number(s.mean_truncated_t_length) + "," + opt_number(s.median_u_value) + "\n";
  }
  return text;
}

std::string grid_truth_csv(const ReplicationGrid& grid) {
  std::string text = "scenario,group,cfpr,cfnr,fpr_obs,fnr_obs\n";
  for (const auto& t : grid.truths)
    for (std::size_t g = 0; g < t.group_labels.size(); ++g) {
      const auto& row = t.truth.table.rows[g];
      const auto& obs = t.truth.observational.rows[g];
      text += std::to_string(t.scenario) + "," + csv_field(t.group_labels[g]) + "," + opt_number(row.fpr.estimate) +
              "," + opt_number(row.fnr.estimate) + "," + opt_number(obs.fpr.estimate) + "," +
              opt_number(obs.fnr.estimate) + "\n";
    }
  return text;
}

int cmd_replicate(const CommonFlags& f, std::ostream& out) {
  Resolved r = resolve(f);
  check_keys(r.cfg,
             {"scenarios", "sizes", "methods", "reps", "seed", "paper_literal_normalization", "folds", "clamp_lo",
              "clamp_hi", "bootstrap", "permutations", "resample", "alpha", "refit", "inference_kind",
              "inference_metric", "max_tasks", "train_size", "validation_size"},
             {"scenario1.", "scenario2.", "scenario3."});
  const GridConfig cfg = GridConfig::from_config(r.cfg);
  const ReplicationGrid grid = replicate(cfg);
  fs::create_directories(r.out);
  write_text(fs::path(r.out) / "replicates.csv", grid_records_csv(grid, cfg.bootstrap > 0));
  write_text(fs::path(r.out) / "summary.csv", grid_summary_csv(grid));
  write_text(fs::path(r.out) / "truth.csv", grid_truth_csv(grid));
  write_text(fs::path(r.out) / "manifest.json",
             manifest("replicate", r.echo, {"replicates.csv", "summary.csv", "truth.csv"}).dump(2) + "\n");
  std::size_t flagged = 0;
  for (const auto& s : grid.summary) flagged += s.flagged ? 1 : 0;
  out << "replicate: " << grid.records.size() << " replicate rows, " << grid.summary.size() << " cells";
  if (flagged) out << ", " << flagged << " cell(s) flagged for infeasible replicates";
  out << "; outputs in " << r.out << "\n";
  return exit_ok;
}

// ---- report ----

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("schema", "column '" + name + "' missing from input table");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split_plain(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

CsvTable read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing_input", "cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty_input", "'" + path.string() + "' is empty");
  t.header = split_plain(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    t.rows.push_back(split_plain(line));
    if (t.rows.back().size() != t.header.size())
      throw DataError("parse", path.string() + ":" + std::to_string(line_no) + ": wrong number of fields");
  }
  return t;
}

std::string fig2_from_report(const fs::path& report_path, const std::string& source) {
  std::ifstream in(report_path);
  if (!in) throw DataError("missing_input", "cannot open '" + report_path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("parse", "malformed report '" + report_path.string() + "': " + e.what());
  }
  if (!j.contains("results") || !j["results"].is_object())
    throw DataError("schema", "'" + report_path.string() + "' is not an audit report");
  std::string text;
  auto num = [](const Json& v) { return v.is_number() ? format_number(v.get<double>()) : std::string(); };
  for (const auto& [kind, block] : j["results"].items())
    for (const auto& r : block.at("group_rates")) {
      const Json& iv = r.at("intervals");
      const bool has = iv.is_object();
      text += csv_field(source) + "," + kind + "," + csv_field(r.at("group").get<std::string>()) + "," +
              num(r.at("estimate")) + "," + (has ? num(iv["t"]["lo"]) : "") + "," + (has ? num(iv["t"]["hi"]) : "") +
              "," + (has ? num(iv["normal"]["lo"]) : "") + "," + (has ? num(iv["normal"]["hi"]) : "") + "," +
              (has ? num(iv["percentile"]["lo"]) : "") + "," + (has ? num(iv["percentile"]["hi"]) : "") + "\n";
    }
  return text;
}

void grid_tables(const fs::path& summary_path, const std::string& source, std::string& fig3, std::string& fig4) {
  const CsvTable t = read_table(summary_path);
  const std::size_t c_s = t.column("scenario"), c_n = t.column("n"), c_m = t.column("method");
  for (const auto& row : t.rows) {
    const std::string key = csv_field(source) + "," + row[c_s] + "," + row[c_n] + "," + row[c_m];
    for (std::size_t k = 0; k < 10; ++k) {
      const std::string name = slot_name(k);
      fig3 += key + "," + (k < 5 ? "positive" : "negative") + "," + to_string(kMetrics[k % 5]) + "," +
              row[t.column(name + "_mean")] + "," + row[t.column(name + "_q025")] + "," +
              row[t.column(name + "_q975")] + "," + row[t.column(name + "_truth")] + "\n";
    }
    if (!row[t.column("coverage_t")].empty())
      for (const char* interval : {"t", "normal", "percentile"})
        fig4 += key + "," + interval + "," + row[t.column(std::string("coverage_") + interval)] + "," +
                row[t.column(std::string("length_") + interval)] + "," +
                (std::string(interval) == "t" ? row[t.column("length_t_truncated")] : std::string()) + "\n";
  }
}

int cmd_report(const CommonFlags& f, std::ostream& out) {
  Resolved r = resolve(f);
  check_keys(r.cfg, {"inputs", "demo.panel", "demo.values", "demo.n", "seed", "paper_literal_normalization", "refit"},
             {});
  fs::create_directories(r.out);
  std::vector<std::string> files;
  const std::vector<std::string> inputs = r.cfg.get_list("inputs", {});
  if (inputs.empty() && !r.cfg.has("demo.values")) throw ConfigError("report needs inputs or demo.values");

  std::string fig2, fig3, fig4;
  for (const auto& input : inputs) {
    const fs::path p = resolve_path(r.base, input);
    if (fs::is_directory(p)) {
      if (fs::exists(p / "summary.csv"))
        grid_tables(p / "summary.csv", input, fig3, fig4);
      else if (fs::exists(p / "report.json"))
        fig2 += fig2_from_report(p / "report.json", input);
      else
        throw DataError("missing_input", "'" + input + "' holds neither report.json nor summary.csv");
    } else if (p.filename() == "summary.csv") {
      grid_tables(p, input, fig3, fig4);
    } else {
      fig2 += fig2_from_report(p, input);
    }
  }
  if (!fig2.empty()) {
    write_text(fs::path(r.out) / "group_rates.csv",
               "source,kind,group,estimate,t_lo,t_hi,normal_lo,normal_hi,percentile_lo,percentile_hi\n" + fig2);
    files.push_back("group_rates.csv");
  }
  if (!fig3.empty()) {
    write_text(fs::path(r.out) / "convergence.csv", "source,scenario,n,method,kind,metric,mean,q025,q975,truth\n" + fig3);
    files.push_back("convergence.csv");
  }
  if (!fig4.empty()) {
    write_text(fs::path(r.out) / "coverage.csv",
               "source,scenario,n,method,interval,coverage,mean_length,mean_truncated_length\n" + fig4);
    files.push_back("coverage.csv");
  }

  if (r.cfg.has("demo.values")) {
    const std::string panel = r.cfg.get_string("demo.panel", "A");
    if (panel.size() != 1) throw ConfigError("demo.panel must be a single letter A-D");
    const auto n = static_cast<std::size_t>(r.cfg.get_int("demo.n", 50000));
    const Normalization mode = r.cfg.get_bool("paper_literal_normalization", false) ? Normalization::paper_literal
                                                                                    : Normalization::pair_mean;
    const auto points = demo_sweep(panel[0], r.cfg.get_doubles("demo.values"), n, r.cfg.get_uint("seed", 1), mode);
    std::string metrics = "panel,parameter,kind,metric,value\n";
    std::string rates = "panel,parameter,group,cfpr,cfnr,fpr_obs,fnr_obs\n";
    const GeneratedData probe = generate_demo_data(DemoConfig::panel(panel[0], 0.2), 16, 1);
    const GroupIndex gi = enumerate_groups(probe.data);
    for (const auto& p : points) {
      for (RateKind kind : {RateKind::positive, RateKind::negative})
        for (MetricId id : kMetrics)
          metrics += panel + "," + format_number(p.value) + "," + to_string(kind) + "," + to_string(id) + "," +
                     format_number(p.truth.suite(kind).value(id)) + "\n";
      for (std::size_t g = 0; g < p.truth.table.size(); ++g) {
        const auto& row = p.truth.table.rows[g];
        const auto& obs = p.truth.observational.rows[g];
        rates += panel + "," + format_number(p.value) + "," + csv_field(gi.label(probe.data, g)) + "," +
                 opt_number(row.fpr.estimate) + "," + opt_number(row.fnr.estimate) + "," +
                 opt_number(obs.fpr.estimate) + "," + opt_number(obs.fnr.estimate) + "\n";
      }
    }
    write_text(fs::path(r.out) / "metric_sweep.csv", metrics);
    write_text(fs::path(r.out) / "sweep_group_rates.csv", rates);
    files.push_back("metric_sweep.csv");
    files.push_back("sweep_group_rates.csv");
  }
  write_text(fs::path(r.out) / "manifest.json", manifest("report", r.echo, files).dump(2) + "\n");
  out << "report: wrote " << files.size() << " table(s) to " << r.out << "\n";
  return exit_ok;
}

void error_record(std::ostream& err, const std::string& category, const std::string& code, const std::string& msg) {
  Json j;
  j["error"] = {{"category", category}, {"code", code}, {"message", msg}};
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual intersectional fairness audits for binary risk models", "cfaudit"};
  app.set_version_flag("--version", std::string("cfaudit ") + kToolVersion);
  app.require_subcommand(1);
  CommonFlags flags;
  CLI::App* audit = app.add_subcommand("audit", "Estimate metrics, u-values and bootstrap intervals for a dataset");
  CLI::App* simulate = app.add_subcommand("simulate", "Generate demonstration or scenario data");
  CLI::App* replicate_cmd = app.add_subcommand("replicate", "Run a simulation replication grid");
  CLI::App* report = app.add_subcommand("report", "Convert audit reports and grids into plotting tables");
  for (CLI::App* cmd : {audit, simulate, replicate_cmd, report}) add_common(cmd, flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (audit->parsed()) return cmd_audit(flags, out);
    if (simulate->parsed()) return cmd_simulate(flags, out);
    if (replicate_cmd->parsed()) return cmd_replicate(flags, out);
    if (report->parsed()) return cmd_report(flags, out);
  } catch (const ConfigError& e) {
    error_record(err, "config", e.code(), e.what());
    return exit_config;
  } catch (const DataError& e) {
    error_record(err, "data", e.code(), e.what());
    return exit_data;
  } catch (const InfeasibleError& e) {
    error_record(err, "infeasible", e.code(), std::string(e.what()) + " (hint: merge sparse groups or collect more data)");
    return exit_infeasible;
  } catch (const fs::filesystem_error& e) {
    error_record(err, "config", "output", e.what());
    return exit_config;
  }
  return exit_config;
}

}  // namespace cfaudit
