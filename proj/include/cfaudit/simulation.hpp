#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfaudit/config.hpp"
#include "cfaudit/data_model.hpp"
#include "cfaudit/forest.hpp"
#include "cfaudit/inference.hpp"
#include "cfaudit/metrics.hpp"
#include "cfaudit/nuisance.hpp"
#include "cfaudit/parallel.hpp"

namespace cfaudit {

/// The four intersections of two binary characteristics, indexed by (A1, A2):
/// majority (0,0), m1 (1,0), m2 (0,1), minority (1,1).
enum class SimGroup { majority = 0, m1 = 1, m2 = 2, minority = 3 };

std::string to_string(SimGroup group);
int sim_a1(SimGroup group);
int sim_a2(SimGroup group);

enum class Role { train, validation, estimation };
std::string to_string(Role role);
Role parse_role(const std::string& name);

struct DemoGroupParams {
  double need = 0.2;            // P(Y0 = 1)
  double opportunity = 0.4;     // P(D = 1 | Y0 = 1)
  double opportunity_no = 0.2;  // P(D = 1 | Y0 = 0)
  double strength = 0.2;        // P(Y1 = 0 | D = 1, Y0 = 1)
  double probability = 0.25;
};

struct DemoConfig {
  std::array<DemoGroupParams, 4> groups;  // indexed by SimGroup
  double fpr_obs = 0.1;
  double fnr_obs = 0.2;

  /// Throws ConfigError on probabilities outside [0, 1] or group shares not summing to 1.
  void validate() const;

  /// Panel 'A'..'D' of the demonstration with its manipulated parameter set to `altered`
  /// (minority strength for A-C, M1 and M2 strengths for D).
  static DemoConfig panel(char panel, double altered);
  static DemoConfig from_config(const ConfigMap& cfg);
};

struct ScenarioConfig {
  int id = 1;
  double nr_maj = 0.6, nr_m = 0.5, nr_min = 0.4;
  double or_maj = 0.2, or_m = 0.4, or_min = 0.6;
  double z_m1 = 0.2, z_m2 = 0.2, z_min = 0.6;
  /// P(Y1 = 1 | Y0 = 1) for the majority group.
  double majority_y1 = 0.8;
  std::array<double, 4> group_probs{0.58, 0.23, 0.13, 0.06};  // indexed by SimGroup
  std::array<double, 4> x_mean{1.0, -1.0, 2.0, -2.0};
  double x_sd = 0.3;
  bool risk_uses_protected = false;
  double clip_lo = 0.005;
  double clip_hi = 0.995;
  double score_coefficient = -2.1972245773362196;  // logit(0.1)
  ForestConfig forest;
  std::size_t n_train = 1000;
  std::size_t n_validation = 50000;

  void validate() const;

  static ScenarioConfig preset(int id);
  /// Starts from the preset named by `scenario` and applies any overrides.
  static ScenarioConfig from_config(const ConfigMap& cfg);

  /// Coefficients on (A1, A2, A1*A2) for the given majority / M / minority rates.
  static std::array<double, 3> contrast(double maj, double m, double min);
};

/// Audit-ready data plus the quantities only a simulation knows.
struct GeneratedData {
  Dataset data;
  std::vector<std::uint8_t> y0;
  std::vector<std::uint8_t> y1;
  Eigen::VectorXd pi_true;
  Role role = Role::estimation;
};

GeneratedData generate_demo_data(const DemoConfig& cfg, std::size_t n, std::uint64_t seed);
/// Closed-form counterfactual rates of the demonstration generator.
double true_demo_cfnr(const DemoConfig& cfg, SimGroup group);
double true_demo_cfpr(const DemoConfig& cfg, SimGroup group);

/// Random forest predicting Y, binarized at `threshold`.
struct RiskModel {
  ForestModel forest;
  std::vector<std::string> features;  // names of the predictor columns, in order
  double threshold = 0.5;

  std::vector<std::uint8_t> predict(const Dataset& ds) const;
};

/// Predictor columns allowed for a scenario.
std::vector<std::string> default_risk_features(const ScenarioConfig& cfg);

/// Throws ConfigError when `features` names a protected column but the scenario excludes them.
RiskModel train_risk_model(const GeneratedData& train, const ScenarioConfig& cfg, std::uint64_t seed,
                           std::optional<std::vector<std::string>> features = std::nullopt);

/// Validation and estimation data need the risk model (treatment depends on the score there).
GeneratedData generate_scenario_data(const ScenarioConfig& cfg, Role role, std::size_t n, std::uint64_t seed,
                                     const RiskModel* model = nullptr);

/// Error rates counted directly against y0.
struct Truth {
  ErrorRateTable table;
  std::vector<ErrorRateTable> marginal_tables;
  ErrorRateTable observational;
  MetricSuite positive;
  MetricSuite negative;

  const MetricSuite& suite(RateKind kind) const { return kind == RateKind::positive ? positive : negative; }
};

Truth compute_truth(const GeneratedData& validation, Normalization mode = Normalization::pair_mean);

/// Nuisance values for `method` on generated data; weighted_true uses the generating propensity.
NuisanceValues simulation_nuisance(const GeneratedData& gen, Method method, const NuisanceOptions& options,
                                   std::uint64_t seed);

struct GridConfig {
  std::vector<int> scenarios{1, 2, 3};
  std::vector<std::size_t> sizes{1000, 5000, 7000, 9000};
  std::vector<Method> methods{Method::weighted_glm, Method::weighted_ensemble, Method::weighted_true,
                              Method::regression};
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  Normalization normalization = Normalization::pair_mean;
  NuisanceOptions nuisance;
  /// Optional per-replicate inference on one metric; 0 disables.
  std::size_t bootstrap = 0;
  std::size_t permutations = 0;
  ResampleRule resample;
  double alpha = 0.1;
  bool refit = true;
  RateKind inference_kind = RateKind::negative;
  MetricId inference_metric = MetricId::avg;
  /// Resource guard on cells x reps.
  std::size_t max_tasks = 100000;
  /// Scenario overrides; presets are used for ids not listed.
  std::vector<ScenarioConfig> scenario_configs;

  static GridConfig from_config(const ConfigMap& cfg);
};

struct ReplicateInference {
  double se = 0.0;
  ConfidenceInterval t, normal, percentile;
  std::optional<double> u_value;
  std::size_t failed_attempts = 0;
};

struct ReplicateRecord {
  int scenario = 0;
  std::size_t n = 0;
  Method method = Method::weighted_glm;
  std::size_t replicate = 0;
  bool feasible = true;
  std::string failure;
  MetricSuite positive;
  MetricSuite negative;
  std::optional<ReplicateInference> inference;
};

struct CellSummary {
  int scenario = 0;
  std::size_t n = 0;
  Method method = Method::weighted_glm;
  std::size_t reps = 0;
  std::size_t infeasible = 0;
  bool flagged = false;  // more than 1% infeasible
  /// Indexed by metric_slot.
  std::array<double, 10> mean{}, q025{}, q975{};
  std::optional<std::array<double, 3>> coverage;     // t, normal, percentile
  std::optional<std::array<double, 3>> mean_length;  // t, normal, percentile
  std::optional<double> mean_truncated_t_length;
  std::optional<double> median_u_value;
};

struct ScenarioTruth {
  int scenario = 0;
  Truth truth;
  std::vector<std::string> group_labels;
};

struct ReplicationGrid {
  std::vector<ScenarioTruth> truths;
  std::vector<ReplicateRecord> records;
  std::vector<CellSummary> summary;
};

/// Trains one risk model per scenario, computes validation truth, then runs every
/// (scenario, size, method, replicate) task. Replicates share estimation data across methods.
ReplicationGrid replicate(const GridConfig& cfg, Execution exec = Execution::parallel);

/// Truth-level points of a demonstration sweep.
struct DemoSweepPoint {
  double value = 0.0;
  Truth truth;
};

std::vector<DemoSweepPoint> demo_sweep(char panel, const std::vector<double>& values, std::size_t n,
                                       std::uint64_t seed, Normalization mode = Normalization::pair_mean);

}  // namespace cfaudit
