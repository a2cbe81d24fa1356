#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "lmo/geo.hpp"

namespace lmo::orch {

// Freshest-state store: one entry per vehicle, keyed by id, holding the
// maximum timestamp ever seen. Readers share the lock, writers serialize.
// Every mutation bumps an epoch counter so snapshots can be ordered.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::int64_t staleness_horizon_ms = 1000)
      : horizon_ms_(staleness_horizon_ms) {}

  std::int64_t staleness_horizon_ms() const { return horizon_ms_; }

  // Keeps the newer timestamp; an equal or older update is dropped.
  bool upsert(const VehicleState& state) {
    std::unique_lock lock(mu_);
    auto it = states_.find(state.vehicle_id);
    if (it != states_.end() && it->second.timestamp_ms >= state.timestamp_ms)
      return false;
    if (it == states_.end()) states_.emplace(state.vehicle_id, state);
    else it->second = state;
    ++epoch_;
    return true;
  }

  // Removes every entry strictly older than the horizon relative to now.
  std::size_t sweep(std::int64_t now_ms) {
    std::unique_lock lock(mu_);
    std::size_t evicted = 0;
    for (auto it = states_.begin(); it != states_.end();) {
      if (now_ms - it->second.timestamp_ms > horizon_ms_) {
        it = states_.erase(it);
        ++evicted;
      } else {
        ++it;
      }
    }
    if (evicted > 0) ++epoch_;
    return evicted;
  }

  struct Snapshot {
    std::uint64_t epoch{0};
    std::vector<VehicleState> states;  // ordered by vehicle_id
  };

  // Atomic copy of the store; never mixes pre- and post-mutation views.
  Snapshot snapshot() const {
    std::shared_lock lock(mu_);
    Snapshot s;
    s.epoch = epoch_;
    s.states.reserve(states_.size());
    for (const auto& [id, state] : states_) s.states.push_back(state);
    return s;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return states_.size();
  }

  std::uint64_t epoch() const {
    std::shared_lock lock(mu_);
    return epoch_;
  }

  // External ordering events (e.g. a scheduled recalculation) can claim the
  // next epoch so later snapshots sort strictly after the event.
  std::uint64_t bump_epoch() {
    std::unique_lock lock(mu_);
    return ++epoch_;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, VehicleState> states_;
  std::uint64_t epoch_{0};
  std::int64_t horizon_ms_;
};

}  // namespace lmo::orch
