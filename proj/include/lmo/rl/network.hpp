#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/rng.hpp"

namespace lmo::rl {

// Fully connected dueling Q-network: a shared ReLU trunk feeding a scalar
// state-value head and a per-action advantage head, aggregated as
// Q = V + A - mean(A). Sizes are configurable so tests can shrink the net
// to something finite differences can sweep.
struct NetworkShape {
  int input{8};
  int hidden{64};
  int actions{15};
};

namespace detail {

struct Linear {
  int in{0}, out{0};
  std::vector<double> w;  // row-major, out x in
  std::vector<double> b;

  void init(int in_dim, int out_dim, Rng& rng) {
    in = in_dim;
    out = out_dim;
    w.resize(std::size_t(in) * out);
    // small positive bias keeps ReLU units alive at init and off the
    // exact kink where gradient checks are undefined
    b.assign(out, 0.01);
    const double bound = std::sqrt(6.0 / (in + out));
    for (auto& v : w) v = rng.uniform(-bound, bound);
  }

  void forward(const double* x, double* y) const {
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w.data() + std::size_t(o) * in;
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }
};

}  // namespace detail

class DuelingNetwork {
 public:
  DuelingNetwork() = default;

  explicit DuelingNetwork(NetworkShape shape, std::uint64_t seed) {
    shape_ = shape;
    Rng rng(seed);
    l1_.init(shape.input, shape.hidden, rng);
    l2_.init(shape.hidden, shape.hidden, rng);
    value_.init(shape.hidden, 1, rng);
    advantage_.init(shape.hidden, shape.actions, rng);
  }

  const NetworkShape& shape() const { return shape_; }

  // Activations of one forward pass, kept so the backward pass can reuse them.
  struct Forward {
    std::vector<double> x;   // input copy
    std::vector<double> h1;  // post-ReLU
    std::vector<double> h2;  // post-ReLU
    double v{0.0};
    std::vector<double> adv;
    std::vector<double> q;
  };

  Forward forward(const std::vector<double>& state) const {
    if (static_cast<int>(state.size()) != shape_.input)
      throw validation_error("state dimension mismatch");
    Forward f;
    f.x = state;
    f.h1.resize(shape_.hidden);
    f.h2.resize(shape_.hidden);
    f.adv.resize(shape_.actions);
    f.q.resize(shape_.actions);
    l1_.forward(f.x.data(), f.h1.data());
    for (auto& v : f.h1) v = v > 0.0 ? v : 0.0;
    l2_.forward(f.h1.data(), f.h2.data());
    for (auto& v : f.h2) v = v > 0.0 ? v : 0.0;
    value_.forward(f.h2.data(), &f.v);
    advantage_.forward(f.h2.data(), f.adv.data());
    double mean = 0.0;
    for (double a : f.adv) mean += a;
    mean /= shape_.actions;
    for (int a = 0; a < shape_.actions; ++a) f.q[a] = f.v + (f.adv[a] - mean);
    return f;
  }

  std::vector<double> q_values(const std::vector<double>& state) const {
    return forward(state).q;
  }

  int greedy_action(const std::vector<double>& state) const {
    const auto q = q_values(state);
    int best = 0;
    for (int a = 1; a < shape_.actions; ++a)
      if (q[a] > q[best]) best = a;
    return best;
  }

  double max_q(const std::vector<double>& state) const {
    const auto q = q_values(state);
    double best = q[0];
    for (double v : q) best = std::max(best, v);
    return best;
  }

  bool finite() const {
    auto ok = [](const detail::Linear& l) {
      for (double v : l.w)
        if (!std::isfinite(v)) return false;
      for (double v : l.b)
        if (!std::isfinite(v)) return false;
      return true;
    };
    return ok(l1_) && ok(l2_) && ok(value_) && ok(advantage_);
  }

  // Flat parameter access in a fixed order (l1.w, l1.b, l2.w, l2.b,
  // value.w, value.b, advantage.w, advantage.b) for gradient checks and IO.
  std::size_t parameter_count() const {
    return l1_.w.size() + l1_.b.size() + l2_.w.size() + l2_.b.size() +
           value_.w.size() + value_.b.size() + advantage_.w.size() +
           advantage_.b.size();
  }

  double get_parameter(std::size_t i) const { return *locate(i); }
  void set_parameter(std::size_t i, double v) { *const_cast<double*>(locate(i)) = v; }

  detail::Linear& l1() { return l1_; }
  detail::Linear& l2() { return l2_; }
  detail::Linear& value() { return value_; }
  detail::Linear& advantage() { return advantage_; }
  const detail::Linear& l1() const { return l1_; }
  const detail::Linear& l2() const { return l2_; }
  const detail::Linear& value() const { return value_; }
  const detail::Linear& advantage() const { return advantage_; }
  NetworkShape& mutable_shape() { return shape_; }

 private:
  const double* locate(std::size_t i) const {
    for (const auto* vec : {&l1_.w, &l1_.b, &l2_.w, &l2_.b, &value_.w,
                            &value_.b, &advantage_.w, &advantage_.b}) {
      if (i < vec->size()) return vec->data() + i;
      i -= vec->size();
    }
    throw validation_error("parameter index out of range");
  }

  NetworkShape shape_;
  detail::Linear l1_, l2_, value_, advantage_;
};

// One training sample as stored in the replay buffer.
struct Transition {
  std::vector<double> state;
  int action{0};
  double reward{0.0};
  std::vector<double> next_state;
  bool terminal{false};
};

// Gradients in the same layout as the parameters they belong to.
struct Gradients {
  std::vector<double> l1_w, l1_b, l2_w, l2_b, v_w, v_b, a_w, a_b;

  void zero_like(const DuelingNetwork& net) {
    l1_w.assign(net.l1().w.size(), 0.0);
    l1_b.assign(net.l1().b.size(), 0.0);
    l2_w.assign(net.l2().w.size(), 0.0);
    l2_b.assign(net.l2().b.size(), 0.0);
    v_w.assign(net.value().w.size(), 0.0);
    v_b.assign(net.value().b.size(), 0.0);
    a_w.assign(net.advantage().w.size(), 0.0);
    a_b.assign(net.advantage().b.size(), 0.0);
  }
};

// Mean-squared error on the taken action's Q-value against a fixed target,
// with gradients accumulated by straightforward backpropagation.
inline double compute_gradients(const DuelingNetwork& net,
                                const std::vector<Transition>& batch,
                                const std::vector<double>& targets,
                                Gradients& grads) {
  if (batch.empty() || batch.size() != targets.size())
    throw validation_error("batch and target sizes must match and be nonempty");
  const auto& shape = net.shape();
  grads.zero_like(net);
  double loss = 0.0;
  const double inv_b = 1.0 / batch.size();

  std::vector<double> d_h2(shape.hidden), d_h1(shape.hidden);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto f = net.forward(batch[s].state);
    const int a = batch[s].action;
    const double err = f.q[a] - targets[s];
    loss += err * err * inv_b;
    const double dq = 2.0 * err * inv_b;

    // Q_a = V + A_a - mean(A): dQ_a/dV = 1, dQ_a/dA_j = [j==a] - 1/n
    const double dv = dq;
    std::fill(d_h2.begin(), d_h2.end(), 0.0);
    for (int j = 0; j < shape.actions; ++j) {
      const double da = dq * ((j == a ? 1.0 : 0.0) - 1.0 / shape.actions);
      grads.a_b[j] += da;
      const double* row = net.advantage().w.data() + std::size_t(j) * shape.hidden;
      double* grow = grads.a_w.data() + std::size_t(j) * shape.hidden;
      for (int i = 0; i < shape.hidden; ++i) {
        grow[i] += da * f.h2[i];
        d_h2[i] += da * row[i];
      }
    }
    grads.v_b[0] += dv;
    for (int i = 0; i < shape.hidden; ++i) {
      grads.v_w[i] += dv * f.h2[i];
      d_h2[i] += dv * net.value().w[i];
    }

    for (int i = 0; i < shape.hidden; ++i)
      if (f.h2[i] <= 0.0) d_h2[i] = 0.0;  // ReLU gate
    std::fill(d_h1.begin(), d_h1.end(), 0.0);
    for (int o = 0; o < shape.hidden; ++o) {
      const double g = d_h2[o];
      if (g == 0.0) continue;
      grads.l2_b[o] += g;
      const double* row = net.l2().w.data() + std::size_t(o) * shape.hidden;
      double* grow = grads.l2_w.data() + std::size_t(o) * shape.hidden;
      for (int i = 0; i < shape.hidden; ++i) {
        grow[i] += g * f.h1[i];
        d_h1[i] += g * row[i];
      }
    }

    for (int i = 0; i < shape.hidden; ++i)
      if (f.h1[i] <= 0.0) d_h1[i] = 0.0;
    for (int o = 0; o < shape.hidden; ++o) {
      const double g = d_h1[o];
      if (g == 0.0) continue;
      grads.l1_b[o] += g;
      double* grow = grads.l1_w.data() + std::size_t(o) * shape.input;
      for (int i = 0; i < shape.input; ++i) grow[i] += g * f.x[i];
    }
  }
  return loss;
}

inline std::vector<double> td_targets(const DuelingNetwork& target_net,
                                      const std::vector<Transition>& batch,
                                      double gamma) {
  std::vector<double> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    targets[i] = batch[i].reward;
    if (!batch[i].terminal)
      targets[i] += gamma * target_net.max_q(batch[i].next_state);
  }
  return targets;
}

// Computes TD targets from the target network, backpropagates the MSE on the
// taken actions and applies one SGD step. Returns the pre-update loss.
inline double train_step(DuelingNetwork& net, const DuelingNetwork& target_net,
                         const std::vector<Transition>& batch, double gamma,
                         double learning_rate) {
  const auto targets = td_targets(target_net, batch, gamma);
  Gradients grads;
  const double loss = compute_gradients(net, batch, targets, grads);
  if (!std::isfinite(loss)) throw fault_error("non-finite training loss");

  auto apply = [learning_rate](std::vector<double>& w, const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  };
  apply(net.l1().w, grads.l1_w);
  apply(net.l1().b, grads.l1_b);
  apply(net.l2().w, grads.l2_w);
  apply(net.l2().b, grads.l2_b);
  apply(net.value().w, grads.v_w);
  apply(net.value().b, grads.v_b);
  apply(net.advantage().w, grads.a_w);
  apply(net.advantage().b, grads.a_b);
  return loss;
}

}  // namespace lmo::rl
