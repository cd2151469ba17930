#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "cfaudit/forest.hpp"
#include "cfaudit/glm.hpp"

namespace cfaudit {

/// Simplex weights minimizing ||labels - member_predictions * w||^2, w >= 0, sum(w) = 1.
/// Solved by accelerated projected gradient started from uniform weights, so members with
/// identical predictions share weight equally.
Eigen::VectorXd super_learner_combine(const Eigen::MatrixXd& member_cv_predictions,
                                      std::span<const std::uint8_t> labels);

/// Squared loss of a weight vector; exposed for tests and diagnostics.
double super_learner_loss(const Eigen::MatrixXd& member_predictions, std::span<const std::uint8_t> labels,
                          const Eigen::VectorXd& weights);

struct SuperLearnerConfig {
  GlmOptions glm;
  ForestConfig forest;
  int inner_folds = 5;
};

/// Two-member ensemble: logistic GLM and random forest.
struct SuperLearner {
  GlmModel glm;
  ForestModel forest;
  Eigen::VectorXd weights;  // (glm, forest)
};

/// Weights come from inner out-of-fold member predictions; members are then refit on all rows.
SuperLearner fit_super_learner(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                               const SuperLearnerConfig& config, std::uint64_t seed);

Eigen::VectorXd predict_super_learner(const SuperLearner& model, const Eigen::MatrixXd& features);

}  // namespace cfaudit
