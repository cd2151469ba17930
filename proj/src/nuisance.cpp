#include "cfaudit/nuisance.hpp"

#include <algorithm>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

std::string to_string(Method method) {
  switch (method) {
    case Method::weighted_glm: return "weighted-glm";
    case Method::weighted_ensemble: return "weighted-ensemble";
    case Method::weighted_true: return "weighted-true";
    case Method::regression: return "regression";
    case Method::observational: return "observational";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::weighted_glm, Method::weighted_ensemble, Method::weighted_true, Method::regression,
                   Method::observational})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown estimation method '" + name + "'");
}

DesignMatrix build_design(const Dataset& ds, const FeatureSet& set, std::optional<int> score_value) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const std::size_t m = ds.protected_count();
  std::vector<Eigen::VectorXd> columns;
  DesignMatrix out;

  if (set.covariates) {
    for (Eigen::Index j = 0; j < ds.covariates().cols(); ++j) {
      columns.emplace_back(ds.covariates().col(j));
      out.names.push_back(ds.spec().covariate_columns[static_cast<std::size_t>(j)]);
    }
  }
  if (set.protected_levels) {
    auto indicator = [&](std::size_t j, int code) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = ds.protected_code(static_cast<std::size_t>(i), j) == code ? 1.0 : 0.0;
      return v;
    };
    auto level_name = [&](std::size_t j, int code) {
      return ds.spec().protected_columns[j] + "=" + ds.level_maps()[j].labels[static_cast<std::size_t>(code)];
    };
    for (std::size_t j = 0; j < m; ++j)
      for (int c = 1; c < static_cast<int>(ds.level_maps()[j].size()); ++c) {
        columns.push_back(indicator(j, c));
        out.names.push_back(level_name(j, c));
      }
    if (m == 2) {
      for (int c1 = 1; c1 < static_cast<int>(ds.level_maps()[0].size()); ++c1)
        for (int c2 = 1; c2 < static_cast<int>(ds.level_maps()[1].size()); ++c2) {
          columns.push_back(indicator(0, c1).cwiseProduct(indicator(1, c2)));
          out.names.push_back(level_name(0, c1) + ":" + level_name(1, c2));
        }
    }
  }
  if (set.score) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v[i] = score_value ? static_cast<double>(*score_value) : static_cast<double>(ds.score()[static_cast<std::size_t>(i)]);
    columns.push_back(std::move(v));
    out.names.push_back(ds.spec().score_column);
  }

  out.x.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) out.x.col(static_cast<Eigen::Index>(k)) = columns[k];
  return out;
}

Eigen::VectorXd clamp_propensity(const Eigen::VectorXd& pi, double lo, double hi) {
  if (!(lo > 0.0 && hi < 1.0 && lo < hi)) throw ConfigError("propensity clamp needs 0 < lo < hi < 1");
  return pi.cwiseMax(lo).cwiseMin(hi);
}

Eigen::VectorXd cross_fit_predictions(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::size_t folds,
                                      std::uint64_t seed, const Learner& learner, std::vector<int>* fold_of_row) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
  if (n < folds) throw InfeasibleError("cross_fit_degeneracy", "fewer records than folds");

  std::vector<int> fold_of(n);
  bool ok = false;
  for (std::uint64_t attempt = 0; attempt < 20 && !ok; ++attempt) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, {attempt});
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = static_cast<int>(k % folds);
    std::vector<std::size_t> ones(folds, 0), sizes(folds, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[static_cast<std::size_t>(fold_of[i])];
      ones[static_cast<std::size_t>(fold_of[i])] += y[i];
    }
    ok = true;
    for (std::size_t f = 0; f < folds; ++f) ok = ok && ones[f] > 0 && ones[f] < sizes[f];
  }
  if (!ok)
    throw InfeasibleError("cross_fit_degeneracy",
                          "could not draw folds that all contain both treated and untreated records");

  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i)
      (fold_of[i] == static_cast<int>(f) ? test : train).push_back(static_cast<Eigen::Index>(i));
    std::vector<std::uint8_t> y_train;
    y_train.reserve(train.size());
    for (auto i : train) y_train.push_back(y[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd pred = learner(x(train, Eigen::all), y_train, x(test, Eigen::all), derive_seed(seed, {100, f}));
    for (std::size_t k = 0; k < test.size(); ++k) out[test[k]] = pred[static_cast<Eigen::Index>(k)];
  }
  if (fold_of_row) *fold_of_row = std::move(fold_of);
  return out;
}

PropensityEstimate cross_fit_propensity(const Dataset& ds, PropensityLearner learner, const NuisanceOptions& options,
                                        std::uint64_t seed) {
  const DesignMatrix design = build_design(ds, FeatureSet{});
  PropensityEstimate est;
  est.lo = options.clamp_lo;
  est.hi = options.clamp_hi;
  Eigen::VectorXd raw;
  if (learner == PropensityLearner::glm) {
    est.method = PropensityMethod::glm;
    const GlmModel model = fit_logistic_glm(design.x, ds.treatment(), options.glm, design.names);
    est.separated = model.separated;
    raw = predict_glm(model, design.x);
  } else {
    est.method = PropensityMethod::ensemble;
    const SuperLearnerConfig cfg = options.ensemble;
    raw = cross_fit_predictions(design.x, ds.treatment(), options.folds, seed,
                                [&cfg](const Eigen::MatrixXd& xt, std::span<const std::uint8_t> yt,
                                       const Eigen::MatrixXd& xs, std::uint64_t s) {
                                  return predict_super_learner(fit_super_learner(xt, yt, cfg, s), xs);
                                });
  }
  est.pi = clamp_propensity(raw, est.lo, est.hi);
  est.clamped_count = static_cast<std::size_t>((raw.array() < est.lo || raw.array() > est.hi).count());
  return est;
}

OutcomeRegressions fit_outcome_regressions(const Dataset& ds, const GlmOptions& options) {
  std::vector<std::size_t> untreated;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.treatment()[i]) untreated.push_back(i);
  if (untreated.empty())
    throw InfeasibleError("positivity", "no untreated records; outcome regressions cannot be fitted");
  const Dataset sub = ds.subset(untreated);
  OutcomeRegressions reg;
  const DesignMatrix with_score = build_design(sub, FeatureSet{true, true, true});
  reg.mu0 = fit_logistic_glm(with_score.x, sub.outcome(), options, with_score.names);
  const DesignMatrix without_score = build_design(sub, FeatureSet{true, true, false});
  reg.mu0_star = fit_logistic_glm(without_score.x, sub.outcome(), options, without_score.names);
  return reg;
}

OutcomePredictions predict_outcome_regressions(const OutcomeRegressions& reg, const Dataset& ds) {
  OutcomePredictions out;
  out.mu0_at_score1 = predict_glm(reg.mu0, build_design(ds, FeatureSet{true, true, true}, 1).x);
  out.mu0_at_score0 = predict_glm(reg.mu0, build_design(ds, FeatureSet{true, true, true}, 0).x);
  out.mu0_star = predict_glm(reg.mu0_star, build_design(ds, FeatureSet{true, true, false}).x);
  return out;
}

NuisanceValues NuisanceValues::subset(std::span<const std::size_t> rows) const {
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  NuisanceValues out;
  if (propensity) {
    out.propensity = *propensity;
    out.propensity->pi = propensity->pi(idx);
  }
  if (outcome) {
    out.outcome = OutcomePredictions{outcome->mu0_at_score1(idx), outcome->mu0_at_score0(idx), outcome->mu0_star(idx)};
  }
  return out;
}

NuisanceValues fit_nuisance(const Dataset& ds, Method method, const NuisanceOptions& options, std::uint64_t seed) {
  NuisanceValues out;
  switch (method) {
    case Method::weighted_glm:
      out.propensity = cross_fit_propensity(ds, PropensityLearner::glm, options, seed);
      break;
    case Method::weighted_ensemble:
      out.propensity = cross_fit_propensity(ds, PropensityLearner::ensemble, options, seed);
      break;
    case Method::weighted_true:
      throw ConfigError("weighted-true needs the generating propensity and cannot be fitted");
    case Method::regression:
      out.outcome = predict_outcome_regressions(fit_outcome_regressions(ds, options.glm), ds);
      break;
    case Method::observational:
      break;
  }
  return out;
}

}  // namespace cfaudit
