#pragma once

// Versioned JSON persistence for trained models and sweep reports. Doubles
// round-trip exactly through the serializer, so a loaded model predicts
// identically to the one saved.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"
#include "lmo/ml/sweep.hpp"

namespace lmo::ml {

using json = nlohmann::json;

inline constexpr int kModelSchemaVersion = 1;

inline json to_json(const TreeNode& n) {
  return json{{"feature", n.feature},   {"threshold", n.threshold},
              {"left", n.left},         {"right", n.right},
              {"depth", n.depth},       {"majority", n.majority},
              {"distribution", n.distribution}};
}

inline TreeNode tree_node_from_json(const json& j) {
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.left = j.at("left").get<int>();
  n.right = j.at("right").get<int>();
  n.depth = j.at("depth").get<int>();
  n.majority = j.at("majority").get<int>();
  n.distribution = j.at("distribution").get<std::vector<double>>();
  return n;
}

inline json to_json(const DecisionTree& model) {
  json nodes = json::array();
  for (const auto& n : model.nodes()) nodes.push_back(to_json(n));
  return json{{"schema_version", kModelSchemaVersion},
              {"algorithm", "dt"},
              {"num_classes", model.num_classes()},
              {"hyperparameters",
               {{"max_depth", model.params().max_depth},
                {"features_per_split", model.params().features_per_split},
                {"seed", model.params().seed}}},
              {"nodes", nodes}};
}

inline json to_json(const RandomForest& model) {
  json trees = json::array();
  for (const auto& t : model.trees()) {
    json nodes = json::array();
    for (const auto& n : t.nodes()) nodes.push_back(to_json(n));
    trees.push_back(std::move(nodes));
  }
  return json{{"schema_version", kModelSchemaVersion},
              {"algorithm", "rf"},
              {"num_classes", model.num_classes()},
              {"hyperparameters",
               {{"n_estimators", model.params().n_estimators},
                {"max_depth", model.params().max_depth},
                {"bootstrap", model.params().bootstrap},
                {"feature_subsample", model.params().feature_subsample},
                {"seed", model.params().seed}}},
              {"trees", trees}};
}

inline json to_json(const KnnModel& model) {
  return json{{"schema_version", kModelSchemaVersion},
              {"algorithm", "knn"},
              {"num_classes", model.num_classes()},
              {"hyperparameters", {{"k", model.k()}}},
              {"mean", model.means()},
              {"scale", model.scales()},
              {"points", model.train_points()},
              {"labels", model.labels()}};
}

inline json to_json(const RegressionNode& n) {
  return json{{"feature", n.feature}, {"threshold", n.threshold},
              {"left", n.left},       {"right", n.right},
              {"depth", n.depth},     {"value", n.value}};
}

inline RegressionNode regression_node_from_json(const json& j) {
  RegressionNode n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.left = j.at("left").get<int>();
  n.right = j.at("right").get<int>();
  n.depth = j.at("depth").get<int>();
  n.value = j.at("value").get<double>();
  return n;
}

inline json to_json(const GradientBoosting& model) {
  json stages = json::array();
  for (const auto& stage : model.stages()) {
    json per_class = json::array();
    for (const auto& tree : stage) {
      json nodes = json::array();
      for (const auto& n : tree.nodes()) nodes.push_back(to_json(n));
      per_class.push_back(std::move(nodes));
    }
    stages.push_back(std::move(per_class));
  }
  return json{{"schema_version", kModelSchemaVersion},
              {"algorithm", "gbm"},
              {"num_classes", model.num_classes()},
              {"hyperparameters",
               {{"n_estimators", model.params().n_estimators},
                {"max_depth", model.params().max_depth},
                {"learning_rate", model.params().learning_rate}}},
              {"init_scores", model.init_scores()},
              {"stages", stages}};
}

namespace detail {

inline json checked_model_json(const json& j, const std::string& algorithm) {
  if (j.at("schema_version").get<int>() != kModelSchemaVersion)
    throw format_error("unsupported model schema version");
  if (j.at("algorithm").get<std::string>() != algorithm)
    throw format_error("model algorithm mismatch: expected " + algorithm);
  return j;
}

}  // namespace detail

inline DecisionTree decision_tree_from_json(const json& raw) {
  const json j = detail::checked_model_json(raw, "dt");
  DecisionTree model;
  model.set_num_classes(j.at("num_classes").get<int>());
  for (const auto& n : j.at("nodes")) model.mutable_nodes().push_back(tree_node_from_json(n));
  return model;
}

inline RandomForest random_forest_from_json(const json& raw) {
  const json j = detail::checked_model_json(raw, "rf");
  RandomForest model;
  model.set_num_classes(j.at("num_classes").get<int>());
  for (const auto& tj : j.at("trees")) {
    DecisionTree tree;
    tree.set_num_classes(model.num_classes());
    for (const auto& n : tj) tree.mutable_nodes().push_back(tree_node_from_json(n));
    model.mutable_trees().push_back(std::move(tree));
  }
  return model;
}

inline KnnModel knn_from_json(const json& raw) {
  const json j = detail::checked_model_json(raw, "knn");
  KnnModel model;
  model.restore(j.at("points").get<std::vector<std::vector<double>>>(),
                j.at("labels").get<std::vector<int>>(),
                j.at("mean").get<std::vector<double>>(),
                j.at("scale").get<std::vector<double>>(),
                j.at("hyperparameters").at("k").get<int>(),
                j.at("num_classes").get<int>());
  return model;
}

inline GradientBoosting gbm_from_json(const json& raw) {
  const json j = detail::checked_model_json(raw, "gbm");
  GradientBoosting model;
  model.set_num_classes(j.at("num_classes").get<int>());
  GbmParams params;
  params.n_estimators = j.at("hyperparameters").at("n_estimators").get<int>();
  params.max_depth = j.at("hyperparameters").at("max_depth").get<int>();
  params.learning_rate = j.at("hyperparameters").at("learning_rate").get<double>();
  model.set_params(params);
  model.set_init_scores(j.at("init_scores").get<std::vector<double>>());
  for (const auto& stage : j.at("stages")) {
    std::vector<RegressionTree> per_class;
    for (const auto& tj : stage) {
      RegressionTree tree;
      for (const auto& n : tj)
        tree.mutable_nodes().push_back(regression_node_from_json(n));
      per_class.push_back(std::move(tree));
    }
    model.mutable_stages().push_back(std::move(per_class));
  }
  return model;
}

inline json to_json(const SweepReport& r) {
  json points = json::array();
  for (const auto& p : r.points)
    points.push_back(json{{"param", p.param},
                          {"value", p.value},
                          {"train_acc", p.train_acc},
                          {"val_acc", p.val_acc}});
  return json{{"schema_version", kModelSchemaVersion},
              {"algorithm", r.algorithm},
              {"task", r.task},
              {"points", points},
              {"chosen", r.chosen},
              {"guard_threshold_pp", r.guard_threshold_pp},
              {"guard_satisfied", r.guard_satisfied},
              {"train_acc", r.train_acc},
              {"val_acc", r.val_acc}};
}

inline SweepReport sweep_report_from_json(const json& j) {
  SweepReport r;
  r.algorithm = j.at("algorithm").get<std::string>();
  r.task = j.at("task").get<std::string>();
  for (const auto& pj : j.at("points")) {
    SweepPoint p;
    p.param = pj.at("param").get<std::string>();
    p.value = pj.at("value").get<int>();
    p.train_acc = pj.at("train_acc").get<double>();
    p.val_acc = pj.at("val_acc").get<double>();
    r.points.push_back(std::move(p));
  }
  r.chosen = j.at("chosen").get<std::map<std::string, int>>();
  r.guard_threshold_pp = j.at("guard_threshold_pp").get<double>();
  r.guard_satisfied = j.at("guard_satisfied").get<bool>();
  r.train_acc = j.at("train_acc").get<double>();
  r.val_acc = j.at("val_acc").get<double>();
  return r;
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw format_error(path + " is not valid JSON");
  return j;
}

}  // namespace lmo::ml
