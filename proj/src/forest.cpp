#include "cfaudit/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/random.hpp"

namespace cfaudit {

double DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& node = nodes[static_cast<std::size_t>(k)];
    k = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(k)].leaf_value;
}

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // sum over children of positives^2 / size
};

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, const ForestConfig& cfg, int mtry, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), mtry_(mtry), rng_(rng), features_(static_cast<std::size_t>(x.cols())) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  DecisionTree grow(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    DecisionTree tree;
    tree.nodes.emplace_back();
    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Pending> stack{{0, 0, rows_.size(), 0}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      const std::size_t count = job.end - job.begin;
      std::size_t positives = 0;
      for (std::size_t k = job.begin; k < job.end; ++k) positives += y_[rows_[k]];
      tree.nodes[static_cast<std::size_t>(job.node)].leaf_value =
          count ? static_cast<double>(positives) / static_cast<double>(count) : 0.0;

      const bool pure = positives == 0 || positives == count;
      if (pure || job.depth >= cfg_.max_depth || count < 2 * static_cast<std::size_t>(cfg_.min_leaf)) continue;

      const SplitCandidate best = best_split(job.begin, job.end, positives);
      if (best.feature < 0) continue;

      auto mid_it = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                   rows_.begin() + static_cast<std::ptrdiff_t>(job.end), [&](std::size_t r) {
                                     return x_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold;
                                   });
      const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, job.end, job.depth + 1});
      stack.push_back({left, job.begin, mid, job.depth + 1});
    }
    return tree;
  }

 private:
  SplitCandidate best_split(std::size_t begin, std::size_t end, std::size_t positives) {
    const std::size_t count = end - begin;
    const auto p = features_.size();
    const auto tries = std::min<std::size_t>(static_cast<std::size_t>(mtry_), p);
    // Partial Fisher-Yates: the first `tries` entries become the candidate features.
    for (std::size_t i = 0; i < tries; ++i) {
      const auto j = i + uniform_index(rng_, p - i);
      std::swap(features_[i], features_[j]);
    }
    const double parent = static_cast<double>(positives) * static_cast<double>(positives) / static_cast<double>(count);
    SplitCandidate best;
    best.score = parent + 1e-12;
    const auto min_leaf = static_cast<std::size_t>(cfg_.min_leaf);

    values_.resize(count);
    for (std::size_t t = 0; t < tries; ++t) {
      const int f = features_[t];
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t r = rows_[begin + k];
        values_[k] = {x_(static_cast<Eigen::Index>(r), f), y_[r]};
      }
      std::sort(values_.begin(), values_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::size_t left_pos = 0;
      for (std::size_t k = 0; k + 1 < count; ++k) {
        left_pos += values_[k].second;
        const std::size_t n_left = k + 1;
        if (n_left < min_leaf) continue;
        if (count - n_left < min_leaf) break;
        if (values_[k].first == values_[k + 1].first) continue;
        const double lp = static_cast<double>(left_pos);
        const double rp = static_cast<double>(positives - left_pos);
        const double score = lp * lp / static_cast<double>(n_left) + rp * rp / static_cast<double>(count - n_left);
        if (score > best.score) {
          best.score = score;
          best.feature = f;
          const double a = values_[k].first;
          const double b = values_[k + 1].first;
          double t_mid = a + (b - a) / 2.0;
          if (!(t_mid < b)) t_mid = a;
          best.threshold = t_mid;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  std::span<const std::uint8_t> y_;
  const ForestConfig& cfg_;
  int mtry_;
  Rng& rng_;
  std::vector<int> features_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<double, std::uint8_t>> values_;
};

}  // namespace

ForestModel fit_random_forest(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                              const ForestConfig& config, Execution exec) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n != labels.size()) throw DataError("shape", "features and labels differ in length");
  if (config.n_trees < 1 || config.max_depth < 0 || config.min_leaf < 1)
    throw ConfigError("forest needs n_trees >= 1, max_depth >= 0 and min_leaf >= 1");
  if (n < 2 * static_cast<std::size_t>(config.min_leaf))
    throw DataError("too_few_rows", "forest needs at least 2 * min_leaf records");

  ForestModel model;
  model.config = config;
  model.feature_count = static_cast<int>(features.cols());
  const int p = model.feature_count;
  int mtry = config.mtry > 0 ? config.mtry : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  mtry = std::clamp(mtry, p > 0 ? 1 : 0, std::max(p, 0));
  model.trees.resize(static_cast<std::size_t>(config.n_trees));

  for_each_index(model.trees.size(), exec, [&](std::size_t t) {
    Rng rng = make_rng(config.seed, {t});
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = uniform_index(rng, n);
    TreeGrower grower(features, labels, config, mtry, rng);
    model.trees[t] = grower.grow(std::move(rows));
  });
  return model;
}

Eigen::VectorXd predict_forest(const ForestModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.feature_count)
    throw DataError("shape", "feature width " + std::to_string(features.cols()) + " does not match forest width " +
                                 std::to_string(model.feature_count));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(features.rows());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = features;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    double sum = 0.0;
    for (const auto& tree : model.trees) sum += tree.predict(rows.row(i));
    out[i] = sum / static_cast<double>(model.trees.size());
  }
  return out;
}

}  // namespace cfaudit
