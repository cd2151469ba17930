#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cfaudit/parallel.hpp"

namespace cfaudit {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 5;
  int mtry = 0;  // 0 selects ceil(sqrt(p))
  std::uint64_t seed = 1;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;  // fraction of label-1 records in the leaf
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

/// Bagged Gini classification trees.
struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestConfig config;
  int feature_count = 0;
};

/// Each tree is grown on its own bootstrap resample with a stream derived from
/// (config.seed, tree index), so serial and parallel execution give identical forests.
ForestModel fit_random_forest(const Eigen::MatrixXd& features, std::span<const std::uint8_t> labels,
                              const ForestConfig& config, Execution exec = Execution::parallel);

/// Mean of per-tree leaf frequencies.
Eigen::VectorXd predict_forest(const ForestModel& model, const Eigen::MatrixXd& features);

}  // namespace cfaudit
