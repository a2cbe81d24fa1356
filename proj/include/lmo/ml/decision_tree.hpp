#pragma once

// CART classifier with Gini impurity. Split scores are compared as exact
// integer rationals so threshold and tie-break choices are reproducible on
// any platform. Trees are built breadth-first, which makes a tree trained
// with a larger depth limit truncatable to any smaller one: predict() with a
// depth cutoff returns exactly what training at that depth would have.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/ml/data.hpp"
#include "lmo/rng.hpp"

namespace lmo::ml {

struct TreeParams {
  int max_depth{30};
  int min_samples_split{2};
  int features_per_split{0};  // 0 means consider every feature
  std::uint64_t seed{0};
};

struct TreeNode {
  int feature{-1};  // -1 marks a leaf
  double threshold{0.0};
  int left{-1};
  int right{-1};
  int depth{0};
  int majority{0};
  std::vector<double> distribution;  // class frequencies at this node, sums to 1

  bool is_leaf() const { return feature < 0; }
};

namespace detail {

// split quality is S_L/n_L + S_R/n_R with S = sum of squared class counts;
// maximizing it minimizes the weighted Gini impurity of the children
struct SplitScore {
  long long s_l{0}, n_l{0}, s_r{0}, n_r{0};
};

inline bool score_better(const SplitScore& a, const SplitScore& b) {
  using I = __int128;
  const I lhs = (I(a.s_l) * a.n_r + I(a.s_r) * a.n_l) * (I(b.n_l) * b.n_r);
  const I rhs = (I(b.s_l) * b.n_r + I(b.s_r) * b.n_l) * (I(a.n_l) * a.n_r);
  return lhs > rhs;
}

inline bool score_improves(const SplitScore& a, long long s_parent, long long n_parent) {
  using I = __int128;
  return (I(a.s_l) * a.n_r + I(a.s_r) * a.n_l) * n_parent >
         I(s_parent) * a.n_l * a.n_r;
}

}  // namespace detail

class DecisionTree {
 public:
  void fit(const Table& t, const TreeParams& params = {}) {
    t.validate();
    params_ = params;
    num_classes_ = t.num_classes;
    nodes_.clear();

    const int d = static_cast<int>(t.dims());
    Rng rng(params.seed);
    std::vector<int> feature_scratch(d);

    struct Pending {
      int node;
      std::vector<int> rows;
    };
    std::deque<Pending> queue;
    {
      std::vector<int> all(t.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      nodes_.emplace_back();
      queue.push_back({0, std::move(all)});
    }

    while (!queue.empty()) {
      auto [node_id, rows] = std::move(queue.front());
      queue.pop_front();
      TreeNode& node = nodes_[node_id];

      std::vector<long long> counts(num_classes_, 0);
      for (int r : rows) ++counts[t.y[r]];
      node.distribution.resize(num_classes_);
      long long best_count = -1;
      long long s_parent = 0;
      for (int c = 0; c < num_classes_; ++c) {
        node.distribution[c] = static_cast<double>(counts[c]) / rows.size();
        s_parent += counts[c] * counts[c];
        if (counts[c] > best_count) {
          best_count = counts[c];
          node.majority = c;
        }
      }

      const bool pure = best_count == static_cast<long long>(rows.size());
      if (node.depth >= params.max_depth || pure ||
          static_cast<int>(rows.size()) < params.min_samples_split)
        continue;

      // candidate features, ascending so ties resolve to the lowest index
      int* begin = feature_scratch.data();
      int n_candidates = d;
      for (int i = 0; i < d; ++i) feature_scratch[i] = i;
      if (params.features_per_split > 0 && params.features_per_split < d) {
        n_candidates = params.features_per_split;
        for (int j = 0; j < n_candidates; ++j) {
          const std::size_t pick = j + rng.uniform_index(d - j);
          std::swap(feature_scratch[j], feature_scratch[pick]);
        }
        std::sort(begin, begin + n_candidates);
      }

      detail::SplitScore best;
      int best_feature = -1;
      double best_threshold = 0.0;
      std::vector<int> order;
      std::vector<long long> left_counts(num_classes_);

      for (int ci = 0; ci < n_candidates; ++ci) {
        const int f = feature_scratch[ci];
        order = rows;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return t.X[a][f] < t.X[b][f]; });
        std::fill(left_counts.begin(), left_counts.end(), 0);
        detail::SplitScore cur;
        cur.n_r = static_cast<long long>(rows.size());
        cur.s_r = s_parent;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          const int c = t.y[order[i]];
          cur.s_l += 2 * left_counts[c] + 1;
          cur.s_r -= 2 * (counts[c] - left_counts[c]) - 1;
          ++left_counts[c];
          ++cur.n_l;
          --cur.n_r;
          const double lo = t.X[order[i]][f];
          const double hi = t.X[order[i + 1]][f];
          if (lo == hi) continue;
          if (!detail::score_improves(cur, s_parent, cur.n_l + cur.n_r)) continue;
          if (best_feature >= 0 && !detail::score_better(cur, best)) continue;
          best = cur;
          best_feature = f;
          best_threshold = lo + (hi - lo) / 2.0;
        }
      }

      if (best_feature < 0) continue;

      std::vector<int> left_rows, right_rows;
      left_rows.reserve(best.n_l);
      right_rows.reserve(best.n_r);
      for (int r : rows) {
        if (t.X[r][best_feature] < best_threshold) left_rows.push_back(r);
        else right_rows.push_back(r);
      }

      node.feature = best_feature;
      node.threshold = best_threshold;
      node.left = static_cast<int>(nodes_.size());
      node.right = node.left + 1;
      const int child_depth = node.depth + 1;
      nodes_.emplace_back();
      nodes_.back().depth = child_depth;
      nodes_.emplace_back();
      nodes_.back().depth = child_depth;
      queue.push_back({nodes_[node_id].left, std::move(left_rows)});
      queue.push_back({nodes_[node_id].right, std::move(right_rows)});
    }
  }

  // depth_cutoff < 0 walks to the leaves; otherwise the tree behaves exactly
  // as if it had been trained with max_depth = depth_cutoff
  int predict(const std::vector<double>& x, int depth_cutoff = -1) const {
    return nodes_[descend(x, depth_cutoff)].majority;
  }

  const std::vector<double>& distribution(const std::vector<double>& x,
                                          int depth_cutoff = -1) const {
    return nodes_[descend(x, depth_cutoff)].distribution;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& mutable_nodes() { return nodes_; }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int n) { num_classes_ = n; }
  const TreeParams& params() const { return params_; }

 private:
  int descend(const std::vector<double>& x, int depth_cutoff) const {
    if (nodes_.empty()) throw validation_error("predict on an untrained tree");
    int node = 0;
    while (true) {
      const TreeNode& nd = nodes_[node];
      if (nd.is_leaf() || (depth_cutoff >= 0 && nd.depth >= depth_cutoff))
        return node;
      node = x[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
  }

  std::vector<TreeNode> nodes_;
  TreeParams params_;
  int num_classes_{0};
};

}  // namespace lmo::ml
