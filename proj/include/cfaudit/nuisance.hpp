#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfaudit/data_model.hpp"
#include "cfaudit/glm.hpp"
#include "cfaudit/super_learner.hpp"

namespace cfaudit {

/// Error-rate estimation methods. `weighted_true` is reserved for simulation studies.
enum class Method { weighted_glm, weighted_ensemble, weighted_true, regression, observational };

std::string to_string(Method method);
/// Accepts the hyphenated names used in config files ("weighted-glm", ...).
Method parse_method(const std::string& name);

struct FeatureSet {
  bool covariates = true;
  bool protected_levels = true;
  bool score = true;
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
};

/// Covariates, reference-coded protected dummies (with pairwise interactions when there are at
/// most two characteristics), and the binary score. `score_value` overrides every record's score.
DesignMatrix build_design(const Dataset& ds, const FeatureSet& set, std::optional<int> score_value = std::nullopt);

enum class PropensityMethod { glm, ensemble, true_dgp };

/// Estimated P(D = 1 | A, X, S) per record, already clamped to [lo, hi].
struct PropensityEstimate {
  Eigen::VectorXd pi;
  PropensityMethod method = PropensityMethod::glm;
  double lo = 0.005;
  double hi = 0.995;
  std::size_t clamped_count = 0;
  bool separated = false;

  /// Positivity constant implied by the clamp.
  double positivity_delta() const { return 1.0 - hi; }
};

/// Element-wise clamp. Throws ConfigError unless 0 < lo < hi < 1.
Eigen::VectorXd clamp_propensity(const Eigen::VectorXd& pi, double lo = 0.005, double hi = 0.995);

/// Fits on (x_train, y_train) and predicts x_test.
using Learner = std::function<Eigen::VectorXd(const Eigen::MatrixXd& x_train, std::span<const std::uint8_t> y_train,
                                              const Eigen::MatrixXd& x_test, std::uint64_t seed)>;

/// Out-of-fold predictions: each record is predicted by a model fitted without its fold.
/// Fold assignment is re-drawn (up to 20 times) until every fold holds both label values;
/// otherwise throws InfeasibleError("cross_fit_degeneracy").
Eigen::VectorXd cross_fit_predictions(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::size_t folds,
                                      std::uint64_t seed, const Learner& learner,
                                      std::vector<int>* fold_of_row = nullptr);

struct NuisanceOptions {
  GlmOptions glm;
  SuperLearnerConfig ensemble;
  std::size_t folds = 10;
  double clamp_lo = 0.005;
  double clamp_hi = 0.995;
};

enum class PropensityLearner { glm, ensemble };

/// GLM: one whole-sample fit. Ensemble: K-fold cross-fitted super learner.
PropensityEstimate cross_fit_propensity(const Dataset& ds, PropensityLearner learner, const NuisanceOptions& options,
                                        std::uint64_t seed);

/// mu0 = E[Y | X, A, S, D = 0] and mu0_star = E[Y | X, A, D = 0], both logistic GLMs on untreated records.
struct OutcomeRegressions {
  GlmModel mu0;
  GlmModel mu0_star;
};

/// Throws InfeasibleError("positivity") when no record is untreated.
OutcomeRegressions fit_outcome_regressions(const Dataset& ds, const GlmOptions& options = {});

/// Per-record outcome-model predictions consumed by the regression estimator.
struct OutcomePredictions {
  Eigen::VectorXd mu0_at_score1;  // mu0(X_i, A_i, S = 1)
  Eigen::VectorXd mu0_at_score0;  // mu0(X_i, A_i, S = 0)
  Eigen::VectorXd mu0_star;       // mu0_star(X_i, A_i)
};

OutcomePredictions predict_outcome_regressions(const OutcomeRegressions& reg, const Dataset& ds);

/// Per-record nuisance values for one dataset. Rows line up with the dataset's records.
struct NuisanceValues {
  std::optional<PropensityEstimate> propensity;
  std::optional<OutcomePredictions> outcome;

  NuisanceValues subset(std::span<const std::size_t> rows) const;
};

/// Fits whatever `method` needs. weighted_true cannot be fitted and throws ConfigError.
NuisanceValues fit_nuisance(const Dataset& ds, Method method, const NuisanceOptions& options, std::uint64_t seed);

}  // namespace cfaudit
