#pragma once

// One-vs-rest gradient boosting with logistic loss. Per class, stages of
// regression trees are fit to residuals (label minus predicted probability);
// leaves take a Newton step, scaled by the learning rate. Class scores start
// at the prior log-odds, so a depth-0 single-stage model reproduces the
// training priors.

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/ml/data.hpp"

namespace lmo::ml {

struct GbmParams {
  int n_estimators{50};
  int max_depth{3};
  double learning_rate{0.1};
  int min_samples_split{2};
};

struct RegressionNode {
  int feature{-1};
  double threshold{0.0};
  int left{-1};
  int right{-1};
  int depth{0};
  double value{0.0};

  bool is_leaf() const { return feature < 0; }
};

// Least-squares split search; leaf values are Newton steps sum(residual) /
// sum(hessian) supplied by the boosting loop.
class RegressionTree {
 public:
  void fit(const std::vector<std::vector<double>>& X,
           const std::vector<double>& residual, const std::vector<double>& hessian,
           int max_depth, int min_samples_split) {
    nodes_.clear();
    struct Pending {
      int node;
      std::vector<int> rows;
    };
    std::deque<Pending> queue;
    {
      std::vector<int> all(X.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      nodes_.emplace_back();
      queue.push_back({0, std::move(all)});
    }
    const int d = X.empty() ? 0 : static_cast<int>(X[0].size());

    while (!queue.empty()) {
      auto [node_id, rows] = std::move(queue.front());
      queue.pop_front();

      double sum_r = 0.0, sum_h = 0.0;
      for (int r : rows) {
        sum_r += residual[r];
        sum_h += hessian[r];
      }
      nodes_[node_id].value = sum_r / std::max(sum_h, 1e-12);

      if (nodes_[node_id].depth >= max_depth ||
          static_cast<int>(rows.size()) < min_samples_split)
        continue;

      // maximize T_L^2/n_L + T_R^2/n_R, which minimizes the split SSE
      const double parent_score = sum_r * sum_r / rows.size();
      double best_score = parent_score;
      int best_feature = -1;
      double best_threshold = 0.0;
      std::vector<int> order;
      for (int f = 0; f < d; ++f) {
        order = rows;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return X[a][f] < X[b][f]; });
        double t_l = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          t_l += residual[order[i]];
          const double lo = X[order[i]][f];
          const double hi = X[order[i + 1]][f];
          if (lo == hi) continue;
          const double n_l = static_cast<double>(i + 1);
          const double n_r = static_cast<double>(order.size() - i - 1);
          const double t_r = sum_r - t_l;
          const double score = t_l * t_l / n_l + t_r * t_r / n_r;
          if (score > best_score) {
            best_score = score;
            best_feature = f;
            best_threshold = lo + (hi - lo) / 2.0;
          }
        }
      }
      if (best_feature < 0) continue;

      std::vector<int> left_rows, right_rows;
      for (int r : rows) {
        if (X[r][best_feature] < best_threshold) left_rows.push_back(r);
        else right_rows.push_back(r);
      }
      nodes_[node_id].feature = best_feature;
      nodes_[node_id].threshold = best_threshold;
      nodes_[node_id].left = static_cast<int>(nodes_.size());
      nodes_[node_id].right = nodes_[node_id].left + 1;
      const int child_depth = nodes_[node_id].depth + 1;
      nodes_.emplace_back();
      nodes_.back().depth = child_depth;
      nodes_.emplace_back();
      nodes_.back().depth = child_depth;
      queue.push_back({nodes_[node_id].left, std::move(left_rows)});
      queue.push_back({nodes_[node_id].right, std::move(right_rows)});
    }
  }

  double predict(const std::vector<double>& x) const {
    int node = 0;
    while (!nodes_[node].is_leaf())
      node = x[nodes_[node].feature] < nodes_[node].threshold ? nodes_[node].left
                                                              : nodes_[node].right;
    return nodes_[node].value;
  }

  const std::vector<RegressionNode>& nodes() const { return nodes_; }
  std::vector<RegressionNode>& mutable_nodes() { return nodes_; }

 private:
  std::vector<RegressionNode> nodes_;
};

class GradientBoosting {
 public:
  void fit(const Table& t, const GbmParams& params = {}) {
    t.validate();
    if (params.n_estimators < 1)
      throw validation_error("boosting needs at least one stage");
    params_ = params;
    num_classes_ = t.num_classes;
    const std::size_t n = t.size();

    init_scores_.assign(num_classes_, 0.0);
    for (int label : t.y) init_scores_[label] += 1.0;
    for (int c = 0; c < num_classes_; ++c) {
      const double prior = std::clamp(init_scores_[c] / n, 1e-6, 1.0 - 1e-6);
      init_scores_[c] = std::log(prior / (1.0 - prior));
    }

    std::vector<std::vector<double>> score(num_classes_,
                                           std::vector<double>(n, 0.0));
    for (int c = 0; c < num_classes_; ++c)
      std::fill(score[c].begin(), score[c].end(), init_scores_[c]);

    stages_.clear();
    loss_history_.clear();
    loss_history_.push_back(log_loss(score, t.y));

    std::vector<double> residual(n), hessian(n);
    for (int m = 0; m < params.n_estimators; ++m) {
      stages_.emplace_back(num_classes_);
      for (int c = 0; c < num_classes_; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
          const double p = sigmoid(score[c][i]);
          residual[i] = (t.y[i] == c ? 1.0 : 0.0) - p;
          hessian[i] = p * (1.0 - p);
        }
        RegressionTree& tree = stages_.back()[c];
        tree.fit(t.X, residual, hessian, params.max_depth, params.min_samples_split);
        for (std::size_t i = 0; i < n; ++i)
          score[c][i] += params.learning_rate * tree.predict(t.X[i]);
      }
      loss_history_.push_back(log_loss(score, t.y));
    }
  }

  std::vector<double> scores(const std::vector<double>& x, int n_stages = -1) const {
    if (init_scores_.empty()) throw validation_error("predict on an untrained model");
    std::vector<double> f = init_scores_;
    const int use = n_stages < 0 ? static_cast<int>(stages_.size())
                                 : std::min<int>(n_stages, stages_.size());
    for (int m = 0; m < use; ++m)
      for (int c = 0; c < num_classes_; ++c)
        f[c] += params_.learning_rate * stages_[m][c].predict(x);
    return f;
  }

  int predict(const std::vector<double>& x, int n_stages = -1) const {
    const auto f = scores(x, n_stages);
    int best = 0;
    for (int c = 1; c < num_classes_; ++c)
      if (f[c] > f[best]) best = c;
    return best;
  }

  // one-vs-rest sigmoids normalized to sum to 1
  std::vector<double> proba(const std::vector<double>& x, int n_stages = -1) const {
    auto f = scores(x, n_stages);
    double total = 0.0;
    for (double& v : f) {
      v = sigmoid(v);
      total += v;
    }
    for (double& v : f) v /= std::max(total, 1e-12);
    return f;
  }

  // mean per-sample sum of binary log-losses; index 0 is before any stage
  const std::vector<double>& loss_history() const { return loss_history_; }
  const std::vector<std::vector<RegressionTree>>& stages() const { return stages_; }
  std::vector<std::vector<RegressionTree>>& mutable_stages() { return stages_; }
  const std::vector<double>& init_scores() const { return init_scores_; }
  void set_init_scores(std::vector<double> v) { init_scores_ = std::move(v); }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int n) { num_classes_ = n; }
  const GbmParams& params() const { return params_; }
  void set_params(const GbmParams& p) { params_ = p; }

 private:
  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  double log_loss(const std::vector<std::vector<double>>& score,
                  const std::vector<int>& y) const {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (int c = 0; c < num_classes_; ++c) {
        const double p = std::clamp(sigmoid(score[c][i]), 1e-12, 1.0 - 1e-12);
        total -= y[i] == c ? std::log(p) : std::log(1.0 - p);
      }
    }
    return total / y.size();
  }

  std::vector<double> init_scores_;
  std::vector<std::vector<RegressionTree>> stages_;  // [stage][class]
  std::vector<double> loss_history_;
  GbmParams params_;
  int num_classes_{0};
};

}  // namespace lmo::ml
