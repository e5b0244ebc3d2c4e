#pragma once

// Random Forest classifier: bootstrap sampling, per-split random feature
// subsets, Gini impurity, midpoint thresholds. All randomness derives from
// the config seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/linalg.hpp"

namespace cota::forest {

enum class MaxFeatures { sqrt_of_features, all, fraction };

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 100;
  MaxFeatures max_features = MaxFeatures::sqrt_of_features;
  double feature_fraction = 1.0;  // used when max_features == fraction
  int min_samples_leaf = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators < 1) throw UsageError("forest.n_estimators must be >= 1");
    if (max_depth < 1) throw UsageError("forest.max_depth must be >= 1");
    if (min_samples_leaf < 1) throw UsageError("forest.min_samples_leaf must be >= 1");
    if (max_features == MaxFeatures::fraction &&
        (feature_fraction <= 0.0 || feature_fraction > 1.0))
      throw UsageError("forest.feature_fraction must be in (0, 1]");
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int samples = 0;       // training samples that reached this node
  double impurity = 0.0; // Gini at this node
  std::vector<double> probs;  // class distribution, leaves only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // preorder: node, left subtree, right subtree
  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int n_classes = 0;
  int feature_count = 0;
};

namespace detail {

struct Builder {
  const linalg::Matrix<double>& x;
  const std::vector<int>& y;
  const ForestConfig& config;
  int n_classes;
  int features_per_split;
  Rng rng;
  std::vector<int> indices;  // bootstrap sample, partitioned in place
  DecisionTree tree;

  double gini(const std::vector<int>& counts, int total) const {
    if (total == 0) return 0.0;
    double sum_sq = 0;
    for (int c : counts) sum_sq += double(c) * double(c);
    return 1.0 - sum_sq / (double(total) * double(total));
  }

  int build(int begin, int end, int depth) {
    const int n = end - begin;
    std::vector<int> counts(std::size_t(n_classes), 0);
    for (int i = begin; i < end; ++i) ++counts[std::size_t(y[std::size_t(indices[std::size_t(i)])])];
    const double node_impurity = gini(counts, n);

    const int node_id = int(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[std::size_t(node_id)].samples = n;
    tree.nodes[std::size_t(node_id)].impurity = node_impurity;

    bool pure = false;
    for (int c : counts)
      if (c == n) pure = true;
    const bool can_split = !pure && depth < config.max_depth &&
                           n >= 2 * config.min_samples_leaf;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = -1.0;  // maximize sum over children of sum_c count^2 / n_child

    if (can_split) {
      // Random feature subset without replacement, then evaluated in
      // ascending feature order so impurity ties resolve to the lowest
      // feature index and lowest threshold.
      std::vector<int> features(static_cast<std::size_t>(x.cols));
      for (int f = 0; f < x.cols; ++f) features[std::size_t(f)] = f;
      for (int pick = 0; pick < features_per_split; ++pick) {
        const int swap_with = int(rng.uniform_int(pick, x.cols - 1));
        std::swap(features[std::size_t(pick)], features[std::size_t(swap_with)]);
      }
      features.resize(std::size_t(features_per_split));
      std::sort(features.begin(), features.end());

      std::vector<std::pair<double, int>> sorted(static_cast<std::size_t>(n));
      std::vector<int> left_counts(static_cast<std::size_t>(n_classes));
      for (int f : features) {
        for (int i = 0; i < n; ++i) {
          const int row = indices[std::size_t(begin + i)];
          sorted[std::size_t(i)] = {x.at(row, f), y[std::size_t(row)]};
        }
        std::sort(sorted.begin(), sorted.end());
        if (sorted.front().first == sorted.back().first) continue;  // constant
        std::fill(left_counts.begin(), left_counts.end(), 0);
        double left_sum_sq = 0;
        double right_sum_sq = 0;
        for (int c : counts) right_sum_sq += double(c) * double(c);
        for (int i = 0; i < n - 1; ++i) {
          const int label = sorted[std::size_t(i)].second;
          // Move sample i to the left side, updating sum of squared counts.
          left_sum_sq += 2.0 * left_counts[std::size_t(label)] + 1.0;
          const double right_count = double(counts[std::size_t(label)] - left_counts[std::size_t(label)]);
          right_sum_sq += -2.0 * right_count + 1.0;
          ++left_counts[std::size_t(label)];
          if (sorted[std::size_t(i)].first == sorted[std::size_t(i) + 1].first) continue;
          const int n_left = i + 1, n_right = n - n_left;
          if (n_left < config.min_samples_leaf || n_right < config.min_samples_leaf)
            continue;
          const double score = left_sum_sq / n_left + right_sum_sq / n_right;
          if (score > best_score) {
            best_score = score;
            best_feature = f;
            best_threshold =
                sorted[std::size_t(i)].first +
                (sorted[std::size_t(i) + 1].first - sorted[std::size_t(i)].first) / 2.0;
          }
        }
      }
    }

    if (best_feature < 0) {
      TreeNode& leaf = tree.nodes[std::size_t(node_id)];
      leaf.probs.resize(std::size_t(n_classes));
      for (int c = 0; c < n_classes; ++c)
        leaf.probs[std::size_t(c)] = double(counts[std::size_t(c)]) / double(n);
      return node_id;
    }

    const auto middle = std::stable_partition(
        indices.begin() + begin, indices.begin() + end, [&](int row) {
          return x.at(row, best_feature) <= best_threshold;
        });
    const int split_at = int(middle - indices.begin());

    tree.nodes[std::size_t(node_id)].feature = best_feature;
    tree.nodes[std::size_t(node_id)].threshold = best_threshold;
    const int left_id = build(begin, split_at, depth + 1);
    tree.nodes[std::size_t(node_id)].left = left_id;
    const int right_id = build(split_at, end, depth + 1);
    tree.nodes[std::size_t(node_id)].right = right_id;
    return node_id;
  }
};

inline int features_per_split(const ForestConfig& config, int feature_count) {
  switch (config.max_features) {
    case MaxFeatures::all:
      return feature_count;
    case MaxFeatures::fraction:
      return std::max(1, int(config.feature_fraction * feature_count));
    case MaxFeatures::sqrt_of_features:
    default:
      return std::max(1, int(std::sqrt(double(feature_count))));
  }
}

}  // namespace detail

inline ForestModel fit_forest(const linalg::Matrix<double>& x,
                              const std::vector<int>& y, const ForestConfig& config) {
  config.validate();
  if (x.rows < 1 || x.rows != int(y.size()))
    throw TrainError("fit_forest: feature rows and label count differ");
  if (x.cols < 1) throw TrainError("fit_forest: zero features");
  for (double value : x.data)
    if (!std::isfinite(value)) throw TrainError("fit_forest: non-finite feature value");
  int n_classes = 0;
  for (int label : y) {
    if (label < 0) throw TrainError("fit_forest: negative class label");
    n_classes = std::max(n_classes, label + 1);
  }

  ForestModel model;
  model.n_classes = n_classes;
  model.feature_count = x.cols;
  model.trees.reserve(std::size_t(config.n_estimators));

  Rng master(config.seed);
  for (int t = 0; t < config.n_estimators; ++t) {
    detail::Builder builder{x, y, config, n_classes,
                            detail::features_per_split(config, x.cols),
                            master.fork(std::uint64_t(t)),
                            {}, {}};
    builder.indices.resize(std::size_t(x.rows));
    for (int i = 0; i < x.rows; ++i)
      builder.indices[std::size_t(i)] = int(builder.rng.uniform_int(0, x.rows - 1));
    builder.build(0, x.rows, 0);
    model.trees.push_back(std::move(builder.tree));
  }
  return model;
}

inline std::vector<double> predict_proba(const ForestModel& model,
                                         std::span<const double> features) {
  if (int(features.size()) != model.feature_count)
    throw DataError("predict_proba: expected " + std::to_string(model.feature_count) +
                    " features, got " + std::to_string(features.size()));
  std::vector<double> probs(std::size_t(model.n_classes), 0.0);
  for (const auto& tree : model.trees) {
    int node = 0;
    while (!tree.nodes[std::size_t(node)].is_leaf()) {
      const TreeNode& current = tree.nodes[std::size_t(node)];
      node = features[std::size_t(current.feature)] <= current.threshold
                 ? current.left
                 : current.right;
    }
    const auto& leaf_probs = tree.nodes[std::size_t(node)].probs;
    for (int c = 0; c < model.n_classes; ++c) probs[std::size_t(c)] += leaf_probs[std::size_t(c)];
  }
  for (double& p : probs) p /= double(model.trees.size());
  return probs;
}

// Mean impurity decrease per feature, normalized to sum 1. A forest with no
// splits yields the uniform vector.
inline std::vector<double> feature_importances(const ForestModel& model) {
  std::vector<double> importance(std::size_t(model.feature_count), 0.0);
  double total = 0.0;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const TreeNode& left = tree.nodes[std::size_t(node.left)];
      const TreeNode& right = tree.nodes[std::size_t(node.right)];
      const double decrease = double(node.samples) * node.impurity -
                              double(left.samples) * left.impurity -
                              double(right.samples) * right.impurity;
      importance[std::size_t(node.feature)] += decrease;
      total += decrease;
    }
  }
  if (total <= 0.0) {
    const double uniform = 1.0 / double(model.feature_count);
    std::fill(importance.begin(), importance.end(), uniform);
    return importance;
  }
  for (double& value : importance) value /= total;
  return importance;
}

// --- Serialization: versioned binary, preorder node dump per tree ---------

namespace detail {

inline void put_i32(std::string& out, std::int32_t v) {
  for (int i = 0; i < 4; ++i) out += char((std::uint32_t(v) >> (8 * i)) & 0xFF);
}
inline std::int32_t get_i32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("forest model: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= std::uint32_t(static_cast<unsigned char>(in[pos + std::size_t(i)])) << (8 * i);
  pos += 4;
  return std::int32_t(v);
}
inline void put_f64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  for (int i = 0; i < 8; ++i) out += char((bits >> (8 * i)) & 0xFF);
}
inline double get_f64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("forest model: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(in[pos + std::size_t(i)])) << (8 * i);
  pos += 8;
  double value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace detail

inline std::string serialize_forest(const ForestModel& model) {
  std::string out = "COTARF \n";
  out += char(1);
  detail::put_i32(out, std::int32_t(model.trees.size()));
  detail::put_i32(out, model.n_classes);
  detail::put_i32(out, model.feature_count);
  for (const auto& tree : model.trees) {
    detail::put_i32(out, std::int32_t(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      detail::put_i32(out, node.feature);
      detail::put_f64(out, node.threshold);
      detail::put_i32(out, node.left);
      detail::put_i32(out, node.right);
      detail::put_i32(out, node.samples);
      detail::put_f64(out, node.impurity);
      detail::put_i32(out, std::int32_t(node.probs.size()));
      for (double p : node.probs) detail::put_f64(out, p);
    }
  }
  return out;
}

inline ForestModel parse_forest(const std::string& bytes) {
  if (bytes.size() < 9 || bytes.compare(0, 8, "COTARF \n") != 0)
    throw DataError("forest model: bad magic");
  if (bytes[8] != char(1)) throw DataError("forest model: unsupported version");
  std::size_t pos = 9;
  ForestModel model;
  const int n_trees = detail::get_i32(bytes, pos);
  model.n_classes = detail::get_i32(bytes, pos);
  model.feature_count = detail::get_i32(bytes, pos);
  model.trees.resize(std::size_t(n_trees));
  for (auto& tree : model.trees) {
    const int n_nodes = detail::get_i32(bytes, pos);
    tree.nodes.resize(std::size_t(n_nodes));
    for (auto& node : tree.nodes) {
      node.feature = detail::get_i32(bytes, pos);
      node.threshold = detail::get_f64(bytes, pos);
      node.left = detail::get_i32(bytes, pos);
      node.right = detail::get_i32(bytes, pos);
      node.samples = detail::get_i32(bytes, pos);
      node.impurity = detail::get_f64(bytes, pos);
      const int n_probs = detail::get_i32(bytes, pos);
      node.probs.resize(std::size_t(n_probs));
      for (double& p : node.probs) p = detail::get_f64(bytes, pos);
    }
  }
  return model;
}

inline void save_forest(const ForestModel& model, const std::string& path) {
  write_file(path, serialize_forest(model));
}

inline ForestModel load_forest(const std::string& path) {
  return parse_forest(read_file(path));
}

}  // namespace cota::forest
