#include "cfaudit/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/numeric.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

std::string to_string(SimGroup group) {
  switch (group) {
    case SimGroup::majority: return "majority";
    case SimGroup::m1: return "m1";
    case SimGroup::m2: return "m2";
    case SimGroup::minority: return "minority";
  }
  return "unknown";
}

int sim_a1(SimGroup group) { return group == SimGroup::m1 || group == SimGroup::minority ? 1 : 0; }
int sim_a2(SimGroup group) { return group == SimGroup::m2 || group == SimGroup::minority ? 1 : 0; }

std::string to_string(Role role) {
  switch (role) {
    case Role::train: return "train";
    case Role::validation: return "validation";
    case Role::estimation: return "estimation";
  }
  return "unknown";
}

Role parse_role(const std::string& name) {
  for (Role r : {Role::train, Role::validation, Role::estimation})
    if (to_string(r) == name) return r;
  throw ConfigError("unknown data role '" + name + "'");
}

namespace {

constexpr std::array<SimGroup, 4> kGroups{SimGroup::majority, SimGroup::m1, SimGroup::m2, SimGroup::minority};

void check_probability(const std::string& what, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0, 1]");
}

void check_shares(const std::array<double, 4>& shares) {
  double total = 0.0;
  for (double p : shares) {
    check_probability("group probability", p);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("group probabilities must sum to 1");
}

SimGroup draw_group(Rng& rng, const std::array<double, 4>& shares) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t g = 0; g < 3; ++g) {
    cumulative += shares[g];
    if (u < cumulative) return kGroups[g];
  }
  return SimGroup::minority;
}

std::vector<LevelMap> binary_levels() {
  std::vector<LevelMap> maps(2);
  for (auto& m : maps) {
    m.intern("0");
    m.intern("1");
  }
  return maps;
}

ColumnSpec simulation_spec(bool covariates) {
  ColumnSpec spec;
  spec.protected_columns = {"a1", "a2"};
  if (covariates) spec.covariate_columns = {"x1", "x2", "x3", "x4"};
  return spec;
}

Eigen::MatrixXd feature_matrix(const Dataset& ds, const std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(names.size()));
  const ColumnSpec& spec = ds.spec();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const auto pit = std::find(spec.protected_columns.begin(), spec.protected_columns.end(), names[k]);
    if (pit != spec.protected_columns.end()) {
      const auto j = static_cast<std::size_t>(pit - spec.protected_columns.begin());
      std::vector<double> level_value;
      for (const auto& label : ds.level_maps()[j].labels) {
        try {
          level_value.push_back(std::stod(label));
        } catch (const std::exception&) {
          throw DataError("schema", "protected column '" + names[k] + "' has non-numeric level '" + label + "'");
        }
      }
      for (Eigen::Index i = 0; i < n; ++i)
        x(i, col) = level_value[static_cast<std::size_t>(ds.protected_code(static_cast<std::size_t>(i), j))];
      continue;
    }
    const auto cit = std::find(spec.covariate_columns.begin(), spec.covariate_columns.end(), names[k]);
    if (cit == spec.covariate_columns.end()) throw DataError("schema", "predictor '" + names[k] + "' not found");
    x.col(col) = ds.covariates().col(cit - spec.covariate_columns.begin());
  }
  return x;
}

}  // namespace

void DemoConfig::validate() const {
  std::array<double, 4> shares{};
  for (std::size_t g = 0; g < 4; ++g) {
    const auto& p = groups[g];
    const std::string name = to_string(kGroups[g]);
    check_probability(name + " need", p.need);
    check_probability(name + " opportunity", p.opportunity);
    check_probability(name + " opportunity without need", p.opportunity_no);
    check_probability(name + " intervention strength", p.strength);
    shares[g] = p.probability;
  }
  check_shares(shares);
  check_probability("observational fpr", fpr_obs);
  check_probability("observational fnr", fnr_obs);
}

DemoConfig DemoConfig::panel(char panel, double altered) {
  DemoConfig cfg;
  for (SimGroup g : kGroups) {
    auto& p = cfg.groups[static_cast<std::size_t>(g)];
    const bool majority = g == SimGroup::majority;
    p.need = majority ? 0.2 : 0.4;
    p.opportunity = majority ? 0.4 : 0.6;
    p.opportunity_no = majority ? 0.2 : 0.3;
    p.strength = 0.2;
  }
  auto& maj = cfg.groups[0];
  auto& m1 = cfg.groups[1];
  auto& m2 = cfg.groups[2];
  auto& min = cfg.groups[3];
  switch (panel) {
    case 'A':
    case 'C':
      min.strength = altered;
      maj.probability = 0.56, m1.probability = 0.24, m2.probability = 0.14, min.probability = 0.06;
      break;
    case 'B':
      min.strength = altered;
      maj.probability = 0.32, m1.probability = 0.32, m2.probability = 0.32, min.probability = 0.04;
      break;
    case 'D':
      min.strength = 0.8;
      m1.strength = altered;
      m2.strength = altered;
      maj.probability = 0.56, m1.probability = 0.24, m2.probability = 0.14, min.probability = 0.06;
      break;
    default:
      throw ConfigError(std::string("unknown demonstration panel '") + panel + "' (expected A-D)");
  }
  cfg.validate();
  return cfg;
}

DemoConfig DemoConfig::from_config(const ConfigMap& c) {
  const std::string letter = c.get_string("panel", "A");
  if (letter.size() != 1) throw ConfigError("panel must be a single letter A-D");
  DemoConfig cfg = DemoConfig::panel(letter[0], c.get_double("altered", 0.2));
  for (SimGroup g : kGroups) {
    auto& p = cfg.groups[static_cast<std::size_t>(g)];
    const std::string prefix = to_string(g) + ".";
    p.need = c.get_double(prefix + "need", p.need);
    p.opportunity = c.get_double(prefix + "opportunity", p.opportunity);
    p.opportunity_no = c.get_double(prefix + "opportunity_no_need", p.opportunity_no);
    p.strength = c.get_double(prefix + "strength", p.strength);
    p.probability = c.get_double(prefix + "probability", p.probability);
  }
  cfg.fpr_obs = c.get_double("fpr_obs", cfg.fpr_obs);
  cfg.fnr_obs = c.get_double("fnr_obs", cfg.fnr_obs);
  cfg.validate();
  return cfg;
}

GeneratedData generate_demo_data(const DemoConfig& cfg, std::size_t n, std::uint64_t seed) {
  cfg.validate();
  std::array<double, 4> shares{};
  for (std::size_t g = 0; g < 4; ++g) shares[g] = cfg.groups[g].probability;

  // P(D = 1 | A, S) by Bayes over (Y0, D)
  std::array<std::array<double, 2>, 4> pi_table{};
  for (std::size_t g = 0; g < 4; ++g) {
    const auto& p = cfg.groups[g];
    const double s1_untreated_need = 1.0 - cfg.fnr_obs;
    const double s1_treated_need = (1.0 - p.strength) * (1.0 - cfg.fnr_obs) + p.strength * cfg.fpr_obs;
    for (int s = 0; s < 2; ++s) {
      auto ps = [s](double p1) { return s ? p1 : 1.0 - p1; };
      const double treated = p.need * p.opportunity * ps(s1_treated_need) +
                             (1.0 - p.need) * p.opportunity_no * ps(cfg.fpr_obs);
      const double untreated = p.need * (1.0 - p.opportunity) * ps(s1_untreated_need) +
                               (1.0 - p.need) * (1.0 - p.opportunity_no) * ps(cfg.fpr_obs);
      pi_table[g][static_cast<std::size_t>(s)] = treated + untreated > 0.0 ? treated / (treated + untreated) : 0.0;
    }
  }

  Rng rng = make_rng(seed, {});
  GeneratedData out;
  out.role = Role::estimation;
  out.y0.resize(n);
  out.y1.resize(n);
  out.pi_true.resize(static_cast<Eigen::Index>(n));
  std::vector<int> codes(2 * n);
  std::vector<std::uint8_t> d(n), y(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SimGroup g = draw_group(rng, shares);
    const auto& p = cfg.groups[static_cast<std::size_t>(g)];
    // fixed number of draws per record keeps streams aligned across parameter sweeps
    const double u_y0 = uniform01(rng), u_d = uniform01(rng), u_y1 = uniform01(rng), u_s = uniform01(rng);
    const bool y0 = u_y0 < p.need;
    const bool treated = u_d < (y0 ? p.opportunity : p.opportunity_no);
    const bool y1 = y0 && u_y1 < 1.0 - p.strength;
    const bool observed = treated ? y1 : y0;
    const bool score = observed ? u_s >= cfg.fnr_obs : u_s < cfg.fpr_obs;
    codes[2 * i] = sim_a1(g);
    codes[2 * i + 1] = sim_a2(g);
    out.y0[i] = y0;
    out.y1[i] = y1;
    d[i] = treated;
    y[i] = observed;
    s[i] = score;
    out.pi_true[static_cast<Eigen::Index>(i)] = pi_table[static_cast<std::size_t>(g)][score ? 1 : 0];
  }
  out.data = Dataset(simulation_spec(false), binary_levels(), std::move(codes), std::move(d), std::move(y),
                     Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0), std::move(s));
  return out;
}

double true_demo_cfnr(const DemoConfig& cfg, SimGroup group) {
  const auto& p = cfg.groups[static_cast<std::size_t>(group)];
  return cfg.fnr_obs + p.opportunity * p.strength * (1.0 - cfg.fpr_obs - cfg.fnr_obs);
}

double true_demo_cfpr(const DemoConfig& cfg, SimGroup) { return cfg.fpr_obs; }

std::array<double, 3> ScenarioConfig::contrast(double maj, double m, double min) {
  const double lmaj = logit(maj), lm = logit(m), lmin = logit(min);
  return {lm - lmaj, lm - lmaj, lmaj - 2.0 * lm + lmin};
}

void ScenarioConfig::validate() const {
  for (double p : {nr_maj, nr_m, nr_min, or_maj, or_m, or_min})
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("need and opportunity rates must lie in (0, 1)");
  for (double z : {z_m1, z_m2, z_min, majority_y1}) check_probability("intervention parameter", z);
  check_shares(group_probs);
  if (!(x_sd > 0.0)) throw ConfigError("covariate standard deviation must be positive");
  if (!(clip_lo > 0.0 && clip_lo < clip_hi && clip_hi < 1.0)) throw ConfigError("clip bounds need 0 < lo < hi < 1");
  if (n_train < 10 || n_validation < 10) throw ConfigError("training and validation sizes must be at least 10");
}

ScenarioConfig ScenarioConfig::preset(int id) {
  ScenarioConfig cfg;
  cfg.id = id;
  switch (id) {
    case 1:
      break;
    case 2:
      cfg.z_m1 = 0.3, cfg.z_m2 = 0.4, cfg.z_min = 0.5;
      cfg.risk_uses_protected = true;
      break;
    case 3:
      cfg.nr_maj = 0.8, cfg.nr_m = 0.4, cfg.nr_min = 0.4;
      cfg.or_maj = 0.4, cfg.or_m = 0.6, cfg.or_min = 0.6;
      cfg.z_m1 = 0.2, cfg.z_m2 = 0.2, cfg.z_min = 0.2;
      cfg.risk_uses_protected = true;
      break;
    default:
      throw ConfigError("unknown scenario " + std::to_string(id) + " (expected 1, 2 or 3)");
  }
  return cfg;
}

ScenarioConfig ScenarioConfig::from_config(const ConfigMap& c) {
  ScenarioConfig cfg = preset(static_cast<int>(c.get_int("scenario")));
  cfg.nr_maj = c.get_double("need.majority", cfg.nr_maj);
  cfg.nr_m = c.get_double("need.single", cfg.nr_m);
  cfg.nr_min = c.get_double("need.minority", cfg.nr_min);
  cfg.or_maj = c.get_double("opportunity.majority", cfg.or_maj);
  cfg.or_m = c.get_double("opportunity.single", cfg.or_m);
  cfg.or_min = c.get_double("opportunity.minority", cfg.or_min);
  cfg.z_m1 = c.get_double("strength.m1", cfg.z_m1);
  cfg.z_m2 = c.get_double("strength.m2", cfg.z_m2);
  cfg.z_min = c.get_double("strength.minority", cfg.z_min);
  cfg.majority_y1 = c.get_double("majority_y1", cfg.majority_y1);
  if (c.has("group_probabilities")) {
    const auto v = c.get_doubles("group_probabilities");
    if (v.size() != 4) throw ConfigError("group_probabilities needs four values");
    std::copy(v.begin(), v.end(), cfg.group_probs.begin());
  }
  if (c.has("covariate_mean")) {
    const auto v = c.get_doubles("covariate_mean");
    if (v.size() != 4) throw ConfigError("covariate_mean needs four values");
    std::copy(v.begin(), v.end(), cfg.x_mean.begin());
  }
  cfg.x_sd = c.get_double("covariate_sd", cfg.x_sd);
  cfg.risk_uses_protected = c.get_bool("risk_uses_protected", cfg.risk_uses_protected);
  cfg.clip_lo = c.get_double("clip_lo", cfg.clip_lo);
  cfg.clip_hi = c.get_double("clip_hi", cfg.clip_hi);
  cfg.score_coefficient = c.get_double("score_coefficient", cfg.score_coefficient);
  cfg.forest.n_trees = static_cast<int>(c.get_int("forest.trees", cfg.forest.n_trees));
  cfg.forest.max_depth = static_cast<int>(c.get_int("forest.max_depth", cfg.forest.max_depth));
  cfg.forest.min_leaf = static_cast<int>(c.get_int("forest.min_leaf", cfg.forest.min_leaf));
  cfg.n_train = static_cast<std::size_t>(c.get_int("train_size", static_cast<std::int64_t>(cfg.n_train)));
  cfg.n_validation =
      static_cast<std::size_t>(c.get_int("validation_size", static_cast<std::int64_t>(cfg.n_validation)));
  cfg.validate();
  return cfg;
}

std::vector<std::uint8_t> RiskModel::predict(const Dataset& ds) const {
  const Eigen::VectorXd p = predict_forest(forest, feature_matrix(ds, features));
  std::vector<std::uint8_t> out(ds.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = binarize_score(p[static_cast<Eigen::Index>(i)], threshold);
  return out;
}

std::vector<std::string> default_risk_features(const ScenarioConfig& cfg) {
  std::vector<std::string> names;
  if (cfg.risk_uses_protected) names = {"a1", "a2"};
  for (const char* x : {"x1", "x2", "x3", "x4"}) names.emplace_back(x);
  return names;
}

RiskModel train_risk_model(const GeneratedData& train, const ScenarioConfig& cfg, std::uint64_t seed,
                           std::optional<std::vector<std::string>> features) {
  if (train.role != Role::train) throw ConfigError("risk models are trained on train-role data");
  RiskModel model;
  model.features = features ? *features : default_risk_features(cfg);
  const auto& protected_cols = train.data.spec().protected_columns;
  for (const auto& f : model.features)
    if (!cfg.risk_uses_protected && std::find(protected_cols.begin(), protected_cols.end(), f) != protected_cols.end())
      throw ConfigError("scenario " + std::to_string(cfg.id) + " risk model may not use protected column '" + f + "'");
  ForestConfig fc = cfg.forest;
  fc.seed = seed;
  model.forest = fit_random_forest(feature_matrix(train.data, model.features), train.data.outcome(), fc);
  return model;
}

GeneratedData generate_scenario_data(const ScenarioConfig& cfg, Role role, std::size_t n, std::uint64_t seed,
                                     const RiskModel* model) {
  cfg.validate();
  if (role != Role::train && !model)
    throw ConfigError("validation and estimation data need a trained risk model", "missing_dependency");

  const auto beta_y0 = ScenarioConfig::contrast(cfg.nr_maj, cfg.nr_m, cfg.nr_min);
  const auto beta_or = ScenarioConfig::contrast(cfg.or_maj, cfg.or_m, cfg.or_min);
  const double base_y0 = logit(cfg.nr_maj);
  const double base_or = logit(cfg.or_maj);
  auto y1_rate = [&](SimGroup g) {
    switch (g) {
      case SimGroup::minority: return 1.0 - cfg.z_min;
      case SimGroup::m1: return 1.0 - cfg.z_m1;
      case SimGroup::m2: return 1.0 - cfg.z_m2;
      case SimGroup::majority: return cfg.majority_y1;
    }
    return 0.0;
  };

  Rng rng = make_rng(seed, {});
  const auto rows = static_cast<Eigen::Index>(n);
  GeneratedData out;
  out.role = role;
  out.y0.resize(n);
  out.y1.resize(n);
  out.pi_true.resize(rows);
  std::vector<int> codes(2 * n);
  std::vector<SimGroup> group(n);
  Eigen::MatrixXd x(rows, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const SimGroup g = draw_group(rng, cfg.group_probs);
    group[i] = g;
    codes[2 * i] = sim_a1(g);
    codes[2 * i + 1] = sim_a2(g);
    for (Eigen::Index j = 0; j < 4; ++j) x(r, j) = cfg.x_mean[static_cast<std::size_t>(j)] + cfg.x_sd * standard_normal(rng);
    const double a1 = sim_a1(g), a2 = sim_a2(g);
    const double eta = base_y0 + x.row(r).sum() + beta_y0[0] * a1 + beta_y0[1] * a2 + beta_y0[2] * a1 * a2;
    const double p_y0 = clamp_probability(expit(eta), cfg.clip_lo, cfg.clip_hi);
    const double u_y0 = uniform01(rng), u_y1 = uniform01(rng);
    out.y0[i] = u_y0 < p_y0;
    out.y1[i] = out.y0[i] && u_y1 < y1_rate(g);
  }

  // the score must exist before treatment is drawn for validation and estimation roles
  std::vector<std::uint8_t> s(n, 0), d(n), y(n);
  Dataset scored(simulation_spec(true), binary_levels(), codes, std::vector<std::uint8_t>(n, 0), out.y0, x, s);
  if (model) s = model->predict(scored);

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double a1 = sim_a1(group[i]), a2 = sim_a2(group[i]);
    double eta = base_or + x(r, 0) + x(r, 1) + beta_or[0] * a1 + beta_or[1] * a2 + beta_or[2] * a1 * a2;
    if (role != Role::train) eta += cfg.score_coefficient * s[i];
    const double p_d = clamp_probability(expit(eta), cfg.clip_lo, cfg.clip_hi);
    d[i] = uniform01(rng) < p_d;
    y[i] = d[i] ? out.y1[i] : out.y0[i];
    out.pi_true[r] = p_d;
  }
  out.data = Dataset(simulation_spec(true), binary_levels(), std::move(codes), std::move(d), std::move(y),
                     std::move(x), std::move(s));
  return out;
}

Truth compute_truth(const GeneratedData& validation, Normalization mode) {
  const Dataset& ds = validation.data;
  const GroupIndex gi = enumerate_groups(ds);
  Truth t;
  t.table = counting_rate_table(ds, gi.membership, validation.y0, TableKind::truth);
  for (std::size_t j = 0; j < ds.protected_count(); ++j)
    t.marginal_tables.push_back(counting_rate_table(ds, marginal_grouping(ds, j), validation.y0, TableKind::truth));
  t.observational = observational_rate_table(ds, gi.membership);
  t.positive = metric_suite(t.table, t.marginal_tables, t.observational, RateKind::positive, mode);
  t.negative = metric_suite(t.table, t.marginal_tables, t.observational, RateKind::negative, mode);
  return t;
}

NuisanceValues simulation_nuisance(const GeneratedData& gen, Method method, const NuisanceOptions& options,
                                   std::uint64_t seed) {
  if (method != Method::weighted_true) return fit_nuisance(gen.data, method, options, seed);
  PropensityEstimate pe;
  pe.pi = gen.pi_true;
  pe.method = PropensityMethod::true_dgp;
  pe.lo = std::min(options.clamp_lo, gen.pi_true.minCoeff());
  pe.hi = std::max(options.clamp_hi, gen.pi_true.maxCoeff());
  NuisanceValues out;
  out.propensity = std::move(pe);
  return out;
}

GridConfig GridConfig::from_config(const ConfigMap& c) {
  GridConfig g;
  if (c.has("scenarios")) {
    g.scenarios.clear();
    for (const auto& s : c.get_list("scenarios")) {
      try {
        g.scenarios.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw ConfigError("bad scenario id '" + s + "'");
      }
      ScenarioConfig::preset(g.scenarios.back());
    }
  }
  if (c.has("sizes")) {
    g.sizes.clear();
    for (double v : c.get_doubles("sizes")) {
      if (!(v >= 10.0) || v != std::floor(v)) throw ConfigError("sizes must be integers >= 10");
      g.sizes.push_back(static_cast<std::size_t>(v));
    }
  }
  if (c.has("methods")) {
    g.methods.clear();
    for (const auto& m : c.get_list("methods")) g.methods.push_back(parse_method(m));
  }
  g.reps = static_cast<std::size_t>(c.get_int("reps", static_cast<std::int64_t>(g.reps)));
  g.seed = c.get_uint("seed", g.seed);
  if (c.get_bool("paper_literal_normalization", false)) g.normalization = Normalization::paper_literal;
  g.nuisance.folds = static_cast<std::size_t>(c.get_int("folds", static_cast<std::int64_t>(g.nuisance.folds)));
  g.nuisance.clamp_lo = c.get_double("clamp_lo", g.nuisance.clamp_lo);
  g.nuisance.clamp_hi = c.get_double("clamp_hi", g.nuisance.clamp_hi);
  g.bootstrap = static_cast<std::size_t>(c.get_int("bootstrap", 0));
  g.permutations = static_cast<std::size_t>(c.get_int("permutations", 0));
  g.resample = ResampleRule::parse(c.get_string("resample", "power:0.75"));
  g.alpha = c.get_double("alpha", g.alpha);
  g.refit = c.get_bool("refit", g.refit);
  g.inference_kind = parse_rate_kind(c.get_string("inference_kind", "negative"));
  g.inference_metric = parse_metric_id(c.get_string("inference_metric", "avg"));
  g.max_tasks = static_cast<std::size_t>(c.get_int("max_tasks", static_cast<std::int64_t>(g.max_tasks)));
  for (int id : g.scenarios) {
    ConfigMap sc;
    sc.set("scenario", std::to_string(id));
    const std::string prefix = "scenario" + std::to_string(id) + ".";
    for (const auto& [key, value] : c.values())
      if (key.rfind(prefix, 0) == 0) sc.set(key.substr(prefix.size()), value);
    if (c.has("train_size") && !sc.has("train_size")) sc.set("train_size", c.get_string("train_size"));
    if (c.has("validation_size") && !sc.has("validation_size"))
      sc.set("validation_size", c.get_string("validation_size"));
    g.scenario_configs.push_back(ScenarioConfig::from_config(sc));
  }
  if (g.reps == 0) throw ConfigError("reps must be positive");
  if (!(g.alpha > 0.0 && g.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  return g;
}

namespace {

const ScenarioConfig& scenario_config(const GridConfig& cfg, int id, ScenarioConfig& fallback) {
  for (const auto& s : cfg.scenario_configs)
    if (s.id == id) return s;
  fallback = ScenarioConfig::preset(id);
  return fallback;
}

ReplicateInference run_inference(const GridConfig& cfg, const GeneratedData& est, Method method,
                                 const NuisanceValues& nuisance, const MetricSuite& observed, std::uint64_t seed) {
  MetricSpec spec;
  spec.method = method;
  spec.normalization = cfg.normalization;
  spec.nuisance = cfg.nuisance;
  spec.refit = cfg.refit;
  if (!cfg.refit || method == Method::weighted_true) spec.fixed = nuisance;

  ReplicateInference inf;
  if (cfg.bootstrap > 0) {
    const BootstrapResult br = rescaled_bootstrap(est.data, spec, cfg.inference_kind, cfg.inference_metric,
                                                  cfg.bootstrap, cfg.resample, derive_seed(seed, {1}),
                                                  Execution::serial);
    inf.se = br.se;
    inf.t = ci_t_interval(br, cfg.alpha);
    inf.normal = ci_normal(br, cfg.alpha);
    inf.percentile = ci_percentile(br, cfg.alpha);
    inf.failed_attempts += br.failed_attempts;
  }
  if (cfg.permutations > 0) {
    const ReferenceDistribution ref = permutation_reference(est.data, spec, cfg.inference_kind, cfg.inference_metric,
                                                            cfg.permutations, derive_seed(seed, {2}),
                                                            Execution::serial);
    inf.u_value = u_value(ref, observed.value(cfg.inference_metric));
    inf.failed_attempts += ref.failed_attempts;
  }
  return inf;
}

CellSummary summarize(const GridConfig& cfg, std::span<const ReplicateRecord> cell, double truth_value) {
  CellSummary s;
  s.scenario = cell.front().scenario;
  s.n = cell.front().n;
  s.method = cell.front().method;
  s.reps = cell.size();
  std::vector<const ReplicateRecord*> ok;
  for (const auto& r : cell) {
    if (r.feasible)
      ok.push_back(&r);
    else
      ++s.infeasible;
  }
  s.flagged = static_cast<double>(s.infeasible) > 0.01 * static_cast<double>(s.reps);
  if (ok.empty()) return s;

  for (RateKind kind : {RateKind::positive, RateKind::negative})
    for (MetricId id : {MetricId::avg, MetricId::max, MetricId::var, MetricId::marg, MetricId::obs}) {
      std::vector<double> v;
      v.reserve(ok.size());
      for (const auto* r : ok) v.push_back((kind == RateKind::positive ? r->positive : r->negative).value(id));
      const std::size_t slot = metric_slot(kind, id);
      s.mean[slot] = mean(v);
      s.q025[slot] = quantile(v, 0.025);
      s.q975[slot] = quantile(v, 0.975);
    }

  if (cfg.bootstrap > 0) {
    std::array<double, 3> cover{}, length{};
    double truncated = 0.0;
    for (const auto* r : ok) {
      const auto& inf = *r->inference;
      const std::array<const ConfidenceInterval*, 3> cis{&inf.t, &inf.normal, &inf.percentile};
      for (std::size_t k = 0; k < 3; ++k) {
        cover[k] += cis[k]->contains(truth_value) ? 1.0 : 0.0;
        length[k] += cis[k]->length();
      }
      truncated += inf.t.hi - inf.t.truncated_lo;
    }
    const double count = static_cast<double>(ok.size());
    for (std::size_t k = 0; k < 3; ++k) {
      cover[k] /= count;
      length[k] /= count;
    }
    s.coverage = cover;
    s.mean_length = length;
    s.mean_truncated_t_length = truncated / count;
  }
  if (cfg.permutations > 0) {
    std::vector<double> u;
    for (const auto* r : ok) u.push_back(*r->inference->u_value);
    s.median_u_value = quantile(u, 0.5);
  }
  return s;
}

}  // namespace

ReplicationGrid replicate(const GridConfig& cfg, Execution exec) {
  const std::size_t cells = cfg.scenarios.size() * cfg.sizes.size() * cfg.methods.size();
  if (cells == 0) throw ConfigError("replication grid is empty");
  if (cells * cfg.reps > cfg.max_tasks) {
    const double evaluations = static_cast<double>(cells * cfg.reps) *
                               static_cast<double>(1 + cfg.bootstrap + cfg.permutations);
    throw ConfigError("grid has " + std::to_string(cells * cfg.reps) + " tasks (limit " +
                          std::to_string(cfg.max_tasks) + "), about " + std::to_string(evaluations) +
                          " pipeline evaluations; raise max_tasks to run it anyway",
                      "resource_guard");
  }

  ReplicationGrid grid;
  std::vector<ScenarioConfig> configs;
  std::vector<RiskModel> models;
  for (int id : cfg.scenarios) {
    ScenarioConfig fallback;
    const ScenarioConfig& sc = scenario_config(cfg, id, fallback);
    const auto sid = static_cast<std::uint64_t>(id);
    const GeneratedData train = generate_scenario_data(sc, Role::train, sc.n_train, derive_seed(cfg.seed, {sid, 0}));
    RiskModel model = train_risk_model(train, sc, derive_seed(cfg.seed, {sid, 1}));
    const GeneratedData validation =
        generate_scenario_data(sc, Role::validation, sc.n_validation, derive_seed(cfg.seed, {sid, 2}), &model);
    ScenarioTruth st;
    st.scenario = id;
    st.truth = compute_truth(validation, cfg.normalization);
    const GroupIndex gi = enumerate_groups(validation.data);
    for (std::size_t g = 0; g < gi.size(); ++g) st.group_labels.push_back(gi.label(validation.data, g));
    grid.truths.push_back(std::move(st));
    configs.push_back(sc);
    models.push_back(std::move(model));
  }

  const std::size_t n_sizes = cfg.sizes.size(), n_methods = cfg.methods.size(), reps = cfg.reps;
  grid.records.resize(cells * reps);
  auto record_index = [&](std::size_t s, std::size_t z, std::size_t m, std::size_t r) {
    return ((s * n_sizes + z) * n_methods + m) * reps + r;
  };

  for_each_index(cfg.scenarios.size() * n_sizes * reps, exec, [&](std::size_t task) {
    const std::size_t r = task % reps;
    const std::size_t z = (task / reps) % n_sizes;
    const std::size_t s = task / (reps * n_sizes);
    const auto sid = static_cast<std::uint64_t>(cfg.scenarios[s]);
    const std::size_t n = cfg.sizes[z];
    const GeneratedData est =
        generate_scenario_data(configs[s], Role::estimation, n, derive_seed(cfg.seed, {sid, 3, n, r}), &models[s]);
    const GroupIndex gi = enumerate_groups(est.data);
    for (std::size_t m = 0; m < n_methods; ++m) {
      ReplicateRecord& rec = grid.records[record_index(s, z, m, r)];
      rec.scenario = cfg.scenarios[s];
      rec.n = n;
      rec.method = cfg.methods[m];
      rec.replicate = r;
      const std::uint64_t seed = derive_seed(cfg.seed, {sid, 4, n, r, static_cast<std::uint64_t>(cfg.methods[m])});
      try {
        const NuisanceValues nuisance = simulation_nuisance(est, rec.method, cfg.nuisance, seed);
        const AuditEstimate ae = estimate_audit(est.data, gi, rec.method, nuisance, cfg.normalization);
        rec.positive = ae.positive;
        rec.negative = ae.negative;
        if (cfg.bootstrap > 0 || cfg.permutations > 0)
          rec.inference = run_inference(cfg, est, rec.method, nuisance, ae.suite(cfg.inference_kind), seed);
      } catch (const InfeasibleError& e) {
        rec.feasible = false;
        rec.failure = e.code();
      } catch (const DataError& e) {
        rec.feasible = false;
        rec.failure = e.code();
      }
    }
  });

  for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
    const double truth_value = grid.truths[s].truth.suite(cfg.inference_kind).value(cfg.inference_metric);
    for (std::size_t z = 0; z < n_sizes; ++z)
      for (std::size_t m = 0; m < n_methods; ++m) {
        const std::span<const ReplicateRecord> cell(grid.records.data() + record_index(s, z, m, 0), reps);
        grid.summary.push_back(summarize(cfg, cell, truth_value));
      }
  }
  return grid;
}

std::vector<DemoSweepPoint> demo_sweep(char panel, const std::vector<double>& values, std::size_t n,
                                       std::uint64_t seed, Normalization mode) {
  std::vector<DemoSweepPoint> out;
  out.reserve(values.size());
  for (double v : values) {
    // every point reuses one seed so that only the swept parameter changes between points
    const GeneratedData gen = generate_demo_data(DemoConfig::panel(panel, v), n, seed);
    out.push_back({v, compute_truth(gen, mode)});
  }
  return out;
}

}  // namespace cfaudit
