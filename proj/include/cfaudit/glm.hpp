#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cfaudit {

struct GlmOptions {
  int max_iter = 100;
  double tol = 1e-8;
};

/// Logistic regression fitted by iteratively reweighted least squares.
struct GlmModel {
  Eigen::VectorXd coefficients;  // intercept first
  bool converged = false;
  /// Set when the labels are (quasi-)perfectly separated; the coefficients are the last iterate.
  bool separated = false;
  int iterations = 0;
  double neg_log_likelihood = 0.0;
  /// Names of the non-intercept columns, when the caller supplied them.
  std::vector<std::string> design_columns;
  /// Negative log-likelihood after each accepted iteration (index 0 is the start).
  std::vector<double> nll_trace;

  std::size_t feature_count() const { return static_cast<std::size_t>(coefficients.size()) - 1; }
};

/// Fits P(label = 1 | features) = expit(b0 + features * b). `features` excludes the intercept.
/// Throws DataError("singular_design") listing collinear columns, or DataError("too_few_rows").
GlmModel fit_logistic_glm(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                          const GlmOptions& options = {}, std::vector<std::string> column_names = {});

/// Predicted probabilities clamped to [1e-12, 1 - 1e-12].
Eigen::VectorXd predict_glm(const GlmModel& model, const Eigen::MatrixXd& features);

/// max_j |sum_i x_ij (y_i - p_i)| over the intercept-augmented design.
double glm_score_norm(const GlmModel& model, const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels);

}  // namespace cfaudit
