#pragma once

// K-nearest-neighbours with training-set standardization. Neighbour order is
// total: squared distance first, then training-row index, so predictions are
// identical across platforms and to the brute-force definition.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/ml/data.hpp"

namespace lmo::ml {

class KnnModel {
 public:
  void fit(const Table& t, int k) {
    t.validate();
    if (k < 1) throw validation_error("k must be positive");
    if (k > static_cast<int>(t.size()))
      throw validation_error("k exceeds the training set size");
    k_ = k;
    num_classes_ = t.num_classes;
    y_ = t.y;

    const std::size_t d = t.dims();
    mean_.assign(d, 0.0);
    scale_.assign(d, 0.0);
    for (const auto& row : t.X)
      for (std::size_t j = 0; j < d; ++j) mean_[j] += row[j];
    for (std::size_t j = 0; j < d; ++j) mean_[j] /= t.size();
    for (const auto& row : t.X)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = row[j] - mean_[j];
        scale_[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      scale_[j] = std::sqrt(scale_[j] / t.size());
      if (scale_[j] < 1e-12) scale_[j] = 0.0;  // constant feature: ignored
    }

    X_.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) X_[i] = standardize(t.X[i]);
  }

  // labels of the k_max nearest neighbours, nearest first
  std::vector<int> neighbor_labels(const std::vector<double>& raw, int k_max) const {
    if (X_.empty()) throw validation_error("predict on an untrained model");
    k_max = std::min<int>(k_max, X_.size());
    const auto q = standardize(raw);

    // max-heap on (distance, index) keeps the k_max best seen so far
    using Entry = std::pair<double, int>;
    std::vector<Entry> heap;
    heap.reserve(k_max + 1);
    for (std::size_t i = 0; i < X_.size(); ++i) {
      double dist = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double diff = X_[i][j] - q[j];
        dist += diff * diff;
      }
      const Entry e{dist, static_cast<int>(i)};
      if (static_cast<int>(heap.size()) < k_max) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end());
      } else if (e < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort_heap(heap.begin(), heap.end());
    std::vector<int> labels;
    labels.reserve(heap.size());
    for (const auto& [dist, idx] : heap) labels.push_back(y_[idx]);
    return labels;
  }

  int predict(const std::vector<double>& raw, int k_override = -1) const {
    const int k = k_override > 0 ? std::min<int>(k_override, X_.size()) : k_;
    return vote(neighbor_labels(raw, k), k);
  }

  int vote(const std::vector<int>& labels, int k) const {
    std::vector<int> counts(num_classes_, 0);
    for (int i = 0; i < k && i < static_cast<int>(labels.size()); ++i)
      ++counts[labels[i]];
    int best = 0;
    for (int c = 1; c < num_classes_; ++c)
      if (counts[c] > counts[best]) best = c;
    return best;
  }

  int k() const { return k_; }
  int num_classes() const { return num_classes_; }
  const std::vector<std::vector<double>>& train_points() const { return X_; }
  const std::vector<int>& labels() const { return y_; }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& scales() const { return scale_; }

  // for deserialization: members restored verbatim
  void restore(std::vector<std::vector<double>> X, std::vector<int> y,
               std::vector<double> mean, std::vector<double> scale, int k,
               int num_classes) {
    X_ = std::move(X);
    y_ = std::move(y);
    mean_ = std::move(mean);
    scale_ = std::move(scale);
    k_ = k;
    num_classes_ = num_classes;
  }

 private:
  std::vector<double> standardize(const std::vector<double>& raw) const {
    if (raw.size() != mean_.size())
      throw validation_error("query dimensionality mismatch");
    std::vector<double> out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j)
      out[j] = scale_[j] == 0.0 ? 0.0 : (raw[j] - mean_[j]) / scale_[j];
    return out;
  }

  std::vector<std::vector<double>> X_;
  std::vector<int> y_;
  std::vector<double> mean_, scale_;
  int k_{1};
  int num_classes_{0};
};

}  // namespace lmo::ml
