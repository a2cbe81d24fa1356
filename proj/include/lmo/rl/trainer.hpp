#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "lmo/rl/env.hpp"
#include "lmo/rl/network.hpp"
#include "lmo/rl/replay.hpp"
#include "lmo/rng.hpp"

namespace lmo::rl {

struct TrainConfig {
  RewardVariant variant{RewardVariant::positive};
  int episodes{1500};
  double gamma{0.95};
  double learning_rate{1e-3};
  int batch_size{64};
  std::size_t replay_capacity{50000};
  int target_sync_steps{500};
  double epsilon_start{1.0};
  double epsilon_end{0.05};
  double epsilon_anneal_fraction{0.5};  // of the planned step budget
  double final_lr_scale{1.0};  // lr anneals linearly to lr * this scale
  int eval_every{100};    // episodes between selection evals; 0 keeps final
  int eval_episodes{40};  // greedy episodes per selection eval
  NetworkShape shape{};
  EnvParams env{};
};

struct RewardLogEntry {
  std::int64_t step{0};
  int episode{0};
  RewardVariant variant{RewardVariant::positive};
  double reward{0.0};
};

struct TrainResult {
  DuelingNetwork net;        // weights with the best selection-eval rate
  DuelingNetwork final_net;  // weights after the last gradient step
  std::vector<RewardLogEntry> reward_log;
  std::int64_t steps{0};
  int episodes{0};
  int successes{0};
  int best_episode{-1};      // -1 when selection evals were disabled
  double best_eval_rate{0.0};
};

struct EvalEpisode {
  Outcome outcome{Outcome::timeout};
  int ticks{0};
  std::vector<double> rewards;      // positive-variant stream
  double final_distance_m{0.0};
};

struct EvalResult {
  std::vector<EvalEpisode> episodes;
  int successes{0};

  double success_rate() const {
    return episodes.empty() ? 0.0
                            : static_cast<double>(successes) / episodes.size();
  }
};

// Greedy rollouts on freshly sampled episodes; `seed` selects the episode
// set and is independent of the training stream.
inline EvalResult evaluate_policy(const DuelingNetwork& net,
                                  const EnvParams& params, int n_episodes,
                                  std::uint64_t seed) {
  EvalResult out;
  Rng env_rng(seed);
  MergeEnv env(params);
  for (int e = 0; e < n_episodes; ++e) {
    EvalEpisode ep;
    std::vector<double> state = env.reset(env_rng);
    while (true) {
      const auto step = env.step(net.greedy_action(state));
      ep.rewards.push_back(step.reward_positive);
      state = step.next_state;
      ++ep.ticks;
      if (step.terminal) {
        ep.outcome = step.outcome;
        break;
      }
    }
    ep.final_distance_m = distance_to_slot(env.m(), env.p(), env.f(), env.lane());
    if (ep.outcome == Outcome::success) ++out.successes;
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

// Standard DQN loop: epsilon-greedy rollouts into a replay buffer, one SGD
// step per environment tick once the buffer holds a full batch, and a hard
// target-network sync on a fixed step cadence. Everything draws from seeded
// sub-streams so a rerun with the same seed is bit-identical. On an
// `eval_every` episode cadence (and after the last episode) the current
// greedy policy is scored on a fixed held-back episode set; the returned
// policy is the snapshot with the best such score. `final_net` keeps the
// last-step weights.
inline TrainResult run_training(const TrainConfig& config, std::uint64_t seed) {
  TrainResult out;
  DuelingNetwork net(config.shape, derive_seed(seed, 0));
  out.net = net;
  out.final_net = net;
  if (config.episodes <= 0) return out;

  DuelingNetwork target = net;
  ReplayBuffer replay(config.replay_capacity);
  Rng env_rng(derive_seed(seed, 1));
  Rng explore_rng(derive_seed(seed, 2));
  Rng replay_rng(derive_seed(seed, 3));
  const std::uint64_t selection_seed = derive_seed(seed, 4);
  MergeEnv env(config.env);

  const double planned_steps =
      static_cast<double>(config.episodes) * config.env.max_ticks;
  const double anneal_steps =
      std::max(1.0, planned_steps * config.epsilon_anneal_fraction);
  const bool select = config.eval_every > 0 && config.eval_episodes > 0;

  for (int episode = 0; episode < config.episodes; ++episode) {
    std::vector<double> state = env.reset(env_rng);
    while (true) {
      const double frac = std::min(1.0, out.steps / anneal_steps);
      const double epsilon =
          config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;

      int action;
      if (explore_rng.uniform() < epsilon) {
        action = static_cast<int>(explore_rng.uniform_index(kNumActions));
      } else {
        action = net.greedy_action(state);
      }

      const auto step = env.step(action);
      const double reward = shift_reward(step.reward_positive, config.variant);
      out.reward_log.push_back({out.steps, episode, config.variant, reward});
      replay.push({state, action, reward, step.next_state, step.terminal});
      state = step.next_state;
      ++out.steps;

      if (replay.size() >= static_cast<std::size_t>(config.batch_size)) {
        const auto batch = replay.sample(config.batch_size, replay_rng);
        const double lr_frac = std::min(1.0, out.steps / planned_steps);
        const double lr = config.learning_rate *
                          (1.0 + (config.final_lr_scale - 1.0) * lr_frac);
        train_step(net, target, batch, config.gamma, lr);
      }
      if (out.steps % config.target_sync_steps == 0) target = net;

      if (step.terminal) {
        if (step.outcome == Outcome::success) ++out.successes;
        break;
      }
    }
    ++out.episodes;

    if (select && ((episode + 1) % config.eval_every == 0 ||
                   episode + 1 == config.episodes)) {
      const auto eval = evaluate_policy(net, config.env, config.eval_episodes,
                                        selection_seed);
      if (out.best_episode < 0 || eval.success_rate() > out.best_eval_rate) {
        out.best_eval_rate = eval.success_rate();
        out.best_episode = episode;
        out.net = net;
      }
    }
  }

  out.final_net = net;
  if (out.best_episode < 0) out.net = net;
  return out;
}

}  // namespace lmo::rl
