#pragma once

// Bagged CART trees with per-split feature subsampling. Each tree draws its
// bootstrap and split randomness from a seed derived from (forest seed,
// tree index), so training is reproducible and order-independent. Voting
// over a prefix of the trees equals a forest trained with that many trees,
// and depth cutoffs propagate to every tree, which makes the hyperparameter
// sweep cheap without changing its meaning.

#include <cmath>
#include <cstdint>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/ml/decision_tree.hpp"
#include "lmo/rng.hpp"

namespace lmo::ml {

struct ForestParams {
  int n_estimators{100};
  int max_depth{30};
  bool bootstrap{true};          // test hook: disable to reduce to plain CART
  bool feature_subsample{true};  // test hook: disable likewise
  std::uint64_t seed{0};
};

class RandomForest {
 public:
  void fit(const Table& t, const ForestParams& params = {}) {
    t.validate();
    if (params.n_estimators < 1)
      throw validation_error("forest needs at least one tree");
    params_ = params;
    num_classes_ = t.num_classes;
    trees_.clear();
    trees_.resize(params.n_estimators);

    const int d = static_cast<int>(t.dims());
    TreeParams tree_params;
    tree_params.max_depth = params.max_depth;
    tree_params.features_per_split =
        params.feature_subsample
            ? std::max(1, static_cast<int>(std::floor(std::sqrt(double(d)))))
            : 0;

    for (int i = 0; i < params.n_estimators; ++i) {
      const std::uint64_t tree_seed =
          derive_seed(params.seed, static_cast<std::uint64_t>(i));
      tree_params.seed = derive_seed(tree_seed, 2);
      if (!params.bootstrap) {
        trees_[i].fit(t, tree_params);
        continue;
      }
      Rng boot(derive_seed(tree_seed, 1));
      std::vector<int> rows(t.size());
      for (auto& r : rows) r = static_cast<int>(boot.uniform_index(t.size()));
      trees_[i].fit(t.select(rows), tree_params);
    }
  }

  // vote over the first n_trees trees (all when < 0), each truncated to
  // depth_cutoff; ties go to the lower class index
  int predict(const std::vector<double>& x, int depth_cutoff = -1,
              int n_trees = -1) const {
    if (trees_.empty()) throw validation_error("predict on an untrained forest");
    const int use = n_trees < 0 ? static_cast<int>(trees_.size())
                                : std::min<int>(n_trees, trees_.size());
    std::vector<int> votes(num_classes_, 0);
    for (int i = 0; i < use; ++i) ++votes[trees_[i].predict(x, depth_cutoff)];
    int best = 0;
    for (int c = 1; c < num_classes_; ++c)
      if (votes[c] > votes[best]) best = c;
    return best;
  }

  const std::vector<DecisionTree>& trees() const { return trees_; }
  std::vector<DecisionTree>& mutable_trees() { return trees_; }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int n) { num_classes_ = n; }
  const ForestParams& params() const { return params_; }

 private:
  std::vector<DecisionTree> trees_;
  ForestParams params_;
  int num_classes_{0};
};

}  // namespace lmo::ml
