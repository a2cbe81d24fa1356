#pragma once

// Accuracy scoring and instance-atomic cross-validation over any of the four
// learners, addressed through a small model spec.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/ml/data.hpp"
#include "lmo/ml/decision_tree.hpp"
#include "lmo/ml/gradient_boosting.hpp"
#include "lmo/ml/knn.hpp"
#include "lmo/ml/random_forest.hpp"
#include "lmo/rng.hpp"

namespace lmo::ml {

enum class Algo { dt, rf, knn, gbm };

inline const char* to_string(Algo a) {
  switch (a) {
    case Algo::dt: return "dt";
    case Algo::rf: return "rf";
    case Algo::knn: return "knn";
    default: return "gbm";
  }
}

inline Algo algo_from_string(const std::string& s) {
  if (s == "dt") return Algo::dt;
  if (s == "rf") return Algo::rf;
  if (s == "knn") return Algo::knn;
  if (s == "gbm") return Algo::gbm;
  throw validation_error("unknown algorithm: " + s);
}

inline double accuracy_score(const std::vector<int>& predictions,
                             const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw validation_error("prediction/label length mismatch");
  if (predictions.empty()) throw validation_error("empty prediction vector");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / predictions.size();
}

// rows are true labels, columns predicted
inline std::vector<std::vector<int>> confusion_matrix(
    const std::vector<int>& predictions, const std::vector<int>& labels,
    int num_classes) {
  if (predictions.size() != labels.size())
    throw validation_error("prediction/label length mismatch");
  std::vector<std::vector<int>> m(num_classes, std::vector<int>(num_classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i)
    ++m.at(labels[i]).at(predictions[i]);
  return m;
}

struct ModelSpec {
  Algo algo{Algo::rf};
  int n_estimators{100};
  int max_depth{30};
  int k{50};
  double learning_rate{0.1};
  std::uint64_t seed{0};
};

inline std::vector<int> train_and_predict(const ModelSpec& spec, const Table& train,
                                          const Table& eval) {
  std::vector<int> out;
  out.reserve(eval.size());
  switch (spec.algo) {
    case Algo::dt: {
      DecisionTree model;
      model.fit(train, {spec.max_depth, 2, 0, spec.seed});
      for (const auto& x : eval.X) out.push_back(model.predict(x));
      break;
    }
    case Algo::rf: {
      RandomForest model;
      model.fit(train, {spec.n_estimators, spec.max_depth, true, true, spec.seed});
      for (const auto& x : eval.X) out.push_back(model.predict(x));
      break;
    }
    case Algo::knn: {
      KnnModel model;
      model.fit(train, std::min<int>(spec.k, train.size()));
      for (const auto& x : eval.X) out.push_back(model.predict(x));
      break;
    }
    case Algo::gbm: {
      GradientBoosting model;
      model.fit(train, {spec.n_estimators, spec.max_depth, spec.learning_rate, 2});
      for (const auto& x : eval.X) out.push_back(model.predict(x));
      break;
    }
  }
  return out;
}

// Deterministic group-to-fold map: groups shuffled by seed, dealt round
// robin, so fold sizes differ by at most one group.
inline std::map<std::string, int> fold_assignment(const std::vector<std::string>& groups,
                                                  int folds, std::uint64_t seed) {
  if (folds < 2) throw validation_error("cross-validation needs at least 2 folds");
  std::vector<std::string> ids = groups;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (static_cast<int>(ids.size()) < folds)
    throw validation_error("fewer groups than folds");
  Rng rng(seed);
  rng.shuffle(ids);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < ids.size(); ++i)
    fold_of[ids[i]] = static_cast<int>(i % folds);
  return fold_of;
}

// Folds are atomic in the row groups: rows of one instance always land in
// the same fold. Rows without groups get per-row synthetic groups.
inline std::vector<double> cross_val_score(const ModelSpec& spec, const Table& t,
                                           int folds, std::uint64_t seed) {
  t.validate();

  std::vector<std::string> group_of(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    group_of[i] = t.groups.empty() ? "row" + std::to_string(i) : t.groups[i];

  const auto fold_of = fold_assignment(group_of, folds, seed);

  std::vector<double> scores;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, eval_rows;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (fold_of.at(group_of[i]) == f) eval_rows.push_back(static_cast<int>(i));
      else train_rows.push_back(static_cast<int>(i));
    }
    const Table train = t.select(train_rows);
    const Table eval = t.select(eval_rows);
    const auto pred = train_and_predict(spec, train, eval);
    scores.push_back(accuracy_score(pred, eval.y));
  }
  return scores;
}

}  // namespace lmo::ml
