#include "cfaudit/glm.hpp"

#include <algorithm>
#include <cmath>

#include "cfaudit/error.hpp"
#include "cfaudit/numeric.hpp"

namespace cfaudit {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd z(features.rows(), features.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(features.cols()) = features;
  return z;
}

double neg_log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) nll += softplus(eta[i]) - y[i] * eta[i];
  return nll;
}

std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
  if (j == 0) return "(intercept)";
  const auto k = static_cast<std::size_t>(j - 1);
  return k < names.size() ? names[k] : "x" + std::to_string(k + 1);
}

// Rank check on the scaled Gram matrix of the intercept-augmented design.
void check_rank(const Eigen::MatrixXd& z, const std::vector<std::string>& names) {
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::Index k = gram.rows();
  std::vector<std::string> bad;
  Eigen::VectorXd scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (gram(j, j) <= 0.0) bad.push_back(column_name(names, j));
    scale[j] = gram(j, j) > 0.0 ? 1.0 / std::sqrt(gram(j, j)) : 0.0;
  }
  if (bad.empty()) {
    const Eigen::MatrixXd scaled = scale.asDiagonal() * gram * scale.asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    for (Eigen::Index r = rank; r < k; ++r) bad.push_back(column_name(names, qr.colsPermutation().indices()[r]));
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad.size(); ++i) list += (i ? ", " : "") + bad[i];
    throw DataError("singular_design", "rank-deficient design; collinear columns: " + list);
  }
}

}  // namespace

GlmModel fit_logistic_glm(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                          const GlmOptions& options, std::vector<std::string> column_names) {
  const Eigen::Index n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw DataError("shape", "features and labels differ in length");
  if (n < features.cols() + 1)
    throw DataError("too_few_rows", "logistic fit needs at least as many rows as coefficients");

  const Eigen::MatrixXd z = with_intercept(features);
  check_rank(z, column_names);

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];

  GlmModel model;
  model.design_columns = std::move(column_names);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(z.cols());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double nll = neg_log_likelihood(eta, y);
  model.nll_trace.push_back(nll);

  const double score_tol = options.tol * static_cast<double>(n);
  Eigen::VectorXd p(n), w(n);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    double worst_residual = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = expit(eta[i]);
      worst_residual = std::max(worst_residual, std::fabs(y[i] - p[i]));
    }
    if (worst_residual < 1e-6) {
      model.separated = true;
      break;
    }
    const Eigen::VectorXd score = z.transpose() * (y - p);
    if (score.cwiseAbs().maxCoeff() <= score_tol) {
      model.converged = true;
      break;
    }
    w = p.array() * (1.0 - p.array());
    const Eigen::MatrixXd zw = z.array().colwise() * w.array().sqrt();
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(z.cols(), z.cols());
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(zw.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(hessian.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) {
      model.separated = true;
      break;
    }
    const Eigen::VectorXd delta = llt.solve(score);

    // Step-halving keeps the objective non-increasing.
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      const Eigen::VectorXd trial = beta + step * delta;
      const Eigen::VectorXd trial_eta = z * trial;
      const double trial_nll = neg_log_likelihood(trial_eta, y);
      if (std::isfinite(trial_nll) && trial_nll <= nll) {
        beta = trial;
        eta = trial_eta;
        nll = trial_nll;
        accepted = true;
        break;
      }
    }
    model.iterations = iter + 1;
    if (!accepted) {
      model.converged = score.cwiseAbs().maxCoeff() <= 1e3 * score_tol;
      break;
    }
    model.nll_trace.push_back(nll);
  }

  if (!model.converged && !model.separated && eta.cwiseAbs().maxCoeff() > 30.0) model.separated = true;
  model.coefficients = beta;
  model.neg_log_likelihood = nll;
  return model;
}

Eigen::VectorXd predict_glm(const GlmModel& model, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != model.feature_count())
    throw DataError("shape", "feature width " + std::to_string(features.cols()) + " does not match model width " +
                                 std::to_string(model.feature_count()));
  Eigen::VectorXd eta = features * model.coefficients.tail(features.cols());
  eta.array() += model.coefficients[0];
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = clamp_probability(expit(eta[i]), 1e-12, 1.0 - 1e-12);
  return out;
}

double glm_score_norm(const GlmModel& model, const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels) {
  Eigen::VectorXd eta = features * model.coefficients.tail(features.cols());
  eta.array() += model.coefficients[0];
  double worst = 0.0;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = labels[static_cast<std::size_t>(i)] - expit(eta[i]);
  worst = std::fabs(r.sum());
  for (Eigen::Index j = 0; j < features.cols(); ++j) worst = std::max(worst, std::fabs(features.col(j).dot(r)));
  return worst;
}

}  // namespace cfaudit
