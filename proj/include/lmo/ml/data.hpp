#pragma once

// Tabular training data shared by all learners. Rows keep the instance they
// came from so splits and cross-validation folds never cut through one.

#include <string>
#include <vector>

#include "lmo/dataset.hpp"
#include "lmo/error.hpp"

namespace lmo::ml {

enum class Task { merge, accel, heading };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::merge: return "merge";
    case Task::accel: return "accel";
    default: return "heading";
  }
}

struct Table {
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  std::vector<std::string> groups;  // per-row instance id; may be empty
  int num_classes{0};

  std::size_t size() const { return X.size(); }
  std::size_t dims() const { return X.empty() ? 0 : X[0].size(); }

  void validate() const {
    if (X.empty()) throw validation_error("table has no rows");
    if (y.size() != X.size()) throw validation_error("label count mismatch");
    if (!groups.empty() && groups.size() != X.size())
      throw validation_error("group count mismatch");
    if (num_classes < 1) throw validation_error("table needs at least one class");
    const std::size_t d = X[0].size();
    if (d == 0) throw validation_error("table has zero feature dimensions");
    for (const auto& row : X)
      if (row.size() != d) throw validation_error("ragged feature rows");
    for (int label : y)
      if (label < 0 || label >= num_classes)
        throw validation_error("label outside [0, num_classes)");
  }

  Table select(const std::vector<int>& rows) const {
    Table t;
    t.num_classes = num_classes;
    t.X.reserve(rows.size());
    t.y.reserve(rows.size());
    for (int r : rows) {
      t.X.push_back(X[r]);
      t.y.push_back(y[r]);
      if (!groups.empty()) t.groups.push_back(groups[r]);
    }
    return t;
  }
};

inline Table make_table(const std::vector<dataset::LabeledSample>& samples, Task task) {
  Table t;
  switch (task) {
    case Task::merge: t.num_classes = 2; break;
    case Task::accel: t.num_classes = dataset::kAccelClasses; break;
    case Task::heading: t.num_classes = dataset::kHeadingClasses; break;
  }
  t.X.reserve(samples.size());
  t.y.reserve(samples.size());
  t.groups.reserve(samples.size());
  for (const auto& s : samples) {
    t.X.emplace_back(s.features.begin(), s.features.end());
    switch (task) {
      case Task::merge: t.y.push_back(s.merge_feasible ? 1 : 0); break;
      case Task::accel: t.y.push_back(s.accel_class); break;
      case Task::heading: t.y.push_back(s.heading_class); break;
    }
    t.groups.push_back(s.instance_id);
  }
  return t;
}

}  // namespace lmo::ml
