#include "cfaudit/super_learner.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "cfaudit/error.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

namespace {

// Euclidean projection onto the probability simplex (sort-based).
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Eigen::VectorXd label_vector(std::span<const std::uint8_t> labels) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<Eigen::Index>(i)] = labels[i];
  return y;
}

}  // namespace

double super_learner_loss(const Eigen::MatrixXd& member_predictions, std::span<const std::uint8_t> labels,
                          const Eigen::VectorXd& weights) {
  return (label_vector(labels) - member_predictions * weights).squaredNorm();
}

Eigen::VectorXd super_learner_combine(const Eigen::MatrixXd& member_cv_predictions,
                                      std::span<const std::uint8_t> labels) {
  const Eigen::Index k = member_cv_predictions.cols();
  if (k == 0) throw ConfigError("super learner needs at least one member");
  if (static_cast<std::size_t>(member_cv_predictions.rows()) != labels.size())
    throw DataError("shape", "member predictions and labels differ in length");

  const Eigen::VectorXd y = label_vector(labels);
  const Eigen::MatrixXd gram = member_cv_predictions.transpose() * member_cv_predictions;
  const Eigen::VectorXd cross = member_cv_predictions.transpose() * y;
  const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();

  Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  if (!(lipschitz > 0.0)) return w;

  const double step = 1.0 / lipschitz;
  Eigen::VectorXd momentum = w;
  double t = 1.0;
  for (int iter = 0; iter < 200000; ++iter) {
    const Eigen::VectorXd grad = 2.0 * (gram * momentum - cross);
    const Eigen::VectorXd next = project_to_simplex(momentum - step * grad);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    momentum = next + ((t - 1.0) / t_next) * (next - w);
    const double change = (next - w).norm();
    w = next;
    t = t_next;
    if (change < 1e-14) break;
  }
  return w;
}

SuperLearner fit_super_learner(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                               const SuperLearnerConfig& config, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto folds = static_cast<std::size_t>(std::max(2, config.inner_folds));
  if (n < folds) throw DataError("too_few_rows", "super learner needs at least one record per inner fold");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0});
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = k % folds;

  Eigen::MatrixXd cv(static_cast<Eigen::Index>(n), 2);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd x_train = features(train, Eigen::all);
    const Eigen::MatrixXd x_test = features(test, Eigen::all);
    std::vector<std::uint8_t> y_train;
    y_train.reserve(train.size());
    for (auto i : train) y_train.push_back(labels[static_cast<std::size_t>(i)]);

    const GlmModel glm = fit_logistic_glm(x_train, y_train, config.glm);
    ForestConfig fc = config.forest;
    fc.seed = derive_seed(seed, {1, f});
    const ForestModel forest = fit_random_forest(x_train, y_train, fc, Execution::serial);
    const Eigen::VectorXd pg = predict_glm(glm, x_test);
    const Eigen::VectorXd pf = predict_forest(forest, x_test);
    for (std::size_t k = 0; k < test.size(); ++k) {
      cv(test[k], 0) = pg[static_cast<Eigen::Index>(k)];
      cv(test[k], 1) = pf[static_cast<Eigen::Index>(k)];
    }
  }

  SuperLearner model;
  model.weights = super_learner_combine(cv, labels);
  model.glm = fit_logistic_glm(features, labels, config.glm);
  ForestConfig fc = config.forest;
  fc.seed = derive_seed(seed, {2});
  model.forest = fit_random_forest(features, labels, fc, Execution::serial);
  return model;
}

Eigen::VectorXd predict_super_learner(const SuperLearner& model, const Eigen::MatrixXd& features) {
  return model.weights[0] * predict_glm(model.glm, features) + model.weights[1] * predict_forest(model.forest, features);
}

}  // namespace cfaudit
