#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "lmo/orch/checker.hpp"
#include "lmo/orch/kb.hpp"
#include "lmo/orch/log.hpp"
#include "lmo/orch/scene.hpp"
#include "lmo/rl/network.hpp"
#include "lmo/rl/policy.hpp"
#include "lmo/wire.hpp"

namespace lmo::orch {

enum class EnvelopeStatus { pending, accepted, rejected, aborted, superseded };

inline const char* to_string(EnvelopeStatus s) {
  switch (s) {
    case EnvelopeStatus::pending: return "pending";
    case EnvelopeStatus::accepted: return "accepted";
    case EnvelopeStatus::rejected: return "rejected";
    case EnvelopeStatus::aborted: return "aborted";
    case EnvelopeStatus::superseded: return "superseded";
  }
  return "?";
}

struct RecommendationEnvelope {
  std::string recommendation_id;
  std::string target_uuid;
  std::vector<rl::LocalWaypoint> waypoints;
  std::int64_t created_at_ms{0};
  EnvelopeStatus status{EnvelopeStatus::pending};
};

// Status may move only out of pending; terminal states are final.
inline bool transition(RecommendationEnvelope& e, EnvelopeStatus to) {
  if (e.status != EnvelopeStatus::pending || to == EnvelopeStatus::pending)
    return false;
  e.status = to;
  return true;
}

struct OrchestratorConfig {
  LaneConfig lane{};
  SafetyParams safety{};
  rl::EnvParams env{};
  int horizon_ticks{rl::kMaxHorizonTicks};
  std::int64_t staleness_ms{1000};
  int workers{1};  // 0 runs computations inline on the triggering thread
};

// The service brain, independent of any socket: ingests parsed messages,
// maintains the knowledge base, mediates recommendation computations with
// single-flight coalescing per target, checks results, and hands emission
// lines to a sink. Behavior depends only on the ingest order, so one worker
// or many produce the same emitted set per target.
class OrchestratorCore {
 public:
  OrchestratorCore(OrchestratorConfig config,
                   std::optional<rl::DuelingNetwork> model)
      : config_(std::move(config)),
        model_(std::move(model)),
        kb_(config_.staleness_ms) {
    config_.env.safety = config_.safety;
    for (int i = 0; i < config_.workers; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~OrchestratorCore() { stop(); }

  void set_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
  }

  KnowledgeBase& kb() { return kb_; }
  const EventLog& log() const { return log_; }
  EventLog& log() { return log_; }
  const OrchestratorConfig& config() const { return config_; }

  std::vector<RecommendationEnvelope> envelopes() const {
    std::lock_guard lock(mu_);
    std::vector<RecommendationEnvelope> out;
    out.reserve(envelopes_.size());
    for (const auto& [id, e] : envelopes_) out.push_back(e);
    return out;
  }

  // One NDJSON line from any ingest connection. Bad lines are counted and
  // logged; they never tear the service down.
  void handle_line(const std::string& line) {
    const wire::Inbound msg = wire::parse_line(line);
    if (const auto* u = std::get_if<wire::VehicleUpdate>(&msg)) {
      handle_update(*u);
    } else if (const auto* f = std::get_if<wire::ManeuverFeedback>(&msg)) {
      handle_feedback(*f);
    } else if (const auto* r = std::get_if<wire::ParseReject>(&msg)) {
      log_.append("reject", {{"reason", r->reason}, {"detail", r->detail}});
    } else {
      log_.append("reject", {{"reason", "unexpected_type"},
                             {"detail", "message type is outbound-only"}});
    }
  }

  void handle_update(const wire::VehicleUpdate& u) {
    const VehicleState state = wire::to_state(u, config_.lane.origin);
    {
      std::lock_guard lock(mu_);
      now_ms_ = std::max(now_ms_, state.timestamp_ms);
    }
    if (!kb_.upsert(state)) return;  // out-of-order, older than stored
    kb_.sweep(current_now());

    const auto snap = kb_.snapshot();
    for (const auto& target :
         affected_targets(snap.states, config_.lane, u.uuid))
      submit_trigger(target);
  }

  void handle_feedback(const wire::ManeuverFeedback& f) {
    std::string recalc_target;
    {
      std::lock_guard lock(mu_);
      auto it = envelopes_.find(f.recommendation_id);
      if (it == envelopes_.end()) {
        log_.append("feedback_unknown", {{"recommendation_id", f.recommendation_id}});
        return;
      }
      const EnvelopeStatus to = f.status == "accept" ? EnvelopeStatus::accepted
                                : f.status == "reject" ? EnvelopeStatus::rejected
                                                       : EnvelopeStatus::aborted;
      if (!transition(it->second, to)) {
        log_.append("feedback_ignored",
                    {{"recommendation_id", f.recommendation_id},
                     {"status", to_string(it->second.status)}});
        return;
      }
      log_.append("feedback", {{"recommendation_id", f.recommendation_id},
                               {"status", to_string(to)}});
      if (to == EnvelopeStatus::rejected || to == EnvelopeStatus::aborted)
        recalc_target = it->second.target_uuid;
    }
    if (!recalc_target.empty()) {
      kb_.bump_epoch();  // the recalculation must see a strictly newer epoch
      log_.append("recalc_scheduled", {{"target", recalc_target}});
      submit_trigger(recalc_target);
    }
  }

  // Blocks until no computation is queued or running.
  void flush() {
    std::unique_lock lock(mu_);
    cv_idle_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

 private:
  std::int64_t current_now() {
    std::lock_guard lock(mu_);
    return now_ms_;
  }

  void submit_trigger(const std::string& target) {
    const std::uint64_t trigger_epoch = kb_.epoch();
    bool inline_run = false;
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      auto& flight = flights_[target];
      if (flight.in_flight) {
        // coalesce: remember only the newest pending trigger
        flight.queued_epoch = std::max(flight.queued_epoch, trigger_epoch);
        return;
      }
      flight.in_flight = true;
      if (config_.workers > 0) {
        queue_.push_back(target);
      } else {
        inline_run = true;
        ++active_;
      }
    }
    if (!inline_run) {
      cv_work_.notify_one();
      return;
    }
    while (true) {
      const std::uint64_t used = compute(target);
      std::unique_lock lock(mu_);
      if (settle_flight(target, used)) continue;
      --active_;
      lock.unlock();
      cv_idle_.notify_all();
      return;
    }
  }

  // Post-computation bookkeeping under the state mutex. A queued trigger
  // the finished snapshot already covered is dropped; a newer one requeues
  // the target, which keeps per-target snapshot epochs strictly increasing.
  // Returns true when the caller should run the target again (inline mode).
  bool settle_flight(const std::string& target, std::uint64_t used_epoch) {
    auto& flight = flights_[target];
    if (flight.queued_epoch > used_epoch) {
      flight.queued_epoch = 0;
      if (config_.workers > 0) {
        queue_.push_back(target);
        return false;
      }
      return true;
    }
    flight.queued_epoch = 0;
    flight.in_flight = false;
    return false;
  }

  void worker_loop() {
    while (true) {
      std::string target;
      {
        std::unique_lock lock(mu_);
        cv_work_.wait(lock, [this] { return stopped_ || !queue_.empty(); });
        if (stopped_ && queue_.empty()) return;
        target = std::move(queue_.front());
        queue_.pop_front();
        ++active_;
      }
      const std::uint64_t used = compute(target);
      {
        std::lock_guard lock(mu_);
        settle_flight(target, used);
        --active_;
      }
      cv_work_.notify_one();
      cv_idle_.notify_all();
    }
  }

  // Runs one recommendation computation and returns the KB epoch of the
  // snapshot it was based on.
  std::uint64_t compute(const std::string& target) {
    const auto snap = kb_.snapshot();
    log_.append("compute", {{"target", target}, {"epoch", snap.epoch}});

    const auto scene = detect_scene(snap.states, config_.lane, target);
    if (!scene) {
      log_.append("no_scene", {{"target", target}});
      return snap.epoch;
    }
    if (!model_) {
      log_.append("model_missing", {{"target", target}});
      return snap.epoch;
    }

    rl::TrajectoryRecommendation rec;
    try {
      rec = rl::recommend_trajectory(*model_, scene->m, scene->p, scene->f,
                                     config_.lane.frame, config_.horizon_ticks,
                                     config_.env);
    } catch (const staleness_error& e) {
      log_.append("stale_scene", {{"target", target}, {"detail", e.what()}});
      return snap.epoch;
    } catch (const validation_error& e) {
      log_.append("compute_error", {{"target", target}, {"detail", e.what()}});
      return snap.epoch;
    }
    if (!rec.ok) {
      log_.append("no_recommendation",
                  {{"target", target}, {"reason", rec.reason}});
      return snap.epoch;
    }

    const CheckResult chk = check_recommendation(
        rec, scene->m, scene->p, scene->f, config_.lane.frame, config_.safety);
    std::vector<std::string> lines;
    {
      std::lock_guard lock(mu_);
      const std::string rec_id = "rec-" + std::to_string(++rec_counter_);
      if (!chk.pass) {
        log_.append("checker_fail", {{"recommendation_id", rec_id},
                                     {"target", target},
                                     {"reason", chk.reason}});
        return snap.epoch;
      }
      log_.append("checker_pass",
                  {{"recommendation_id", rec_id}, {"target", target}});
      lines.push_back(store_and_render(rec_id, target, rec.waypoints,
                                       scene->m.timestamp_ms));

      if (!rec.f_slowdown.empty()) {
        const std::string f_id = "rec-" + std::to_string(++rec_counter_);
        log_.append("checker_pass", {{"recommendation_id", f_id},
                                     {"target", scene->f.vehicle_id},
                                     {"plan", "follower_slowdown"}});
        lines.push_back(store_and_render(f_id, scene->f.vehicle_id,
                                         rec.f_slowdown,
                                         scene->m.timestamp_ms));
      }
    }
    std::function<void(const std::string&)> sink;
    {
      std::lock_guard lock(mu_);
      sink = sink_;
    }
    if (sink)
      for (const auto& line : lines) sink(line);
    return snap.epoch;
  }

  // Stores a pending envelope (superseding any previous pending one for the
  // same target) and renders its wire line. Caller holds the state mutex.
  std::string store_and_render(const std::string& rec_id,
                               const std::string& target,
                               const std::vector<rl::LocalWaypoint>& waypoints,
                               std::int64_t created_at_ms) {
    for (auto& [id, e] : envelopes_) {
      if (e.target_uuid == target && e.status == EnvelopeStatus::pending) {
        transition(e, EnvelopeStatus::superseded);
        log_.append("superseded", {{"recommendation_id", id}});
      }
    }
    RecommendationEnvelope env;
    env.recommendation_id = rec_id;
    env.target_uuid = target;
    env.waypoints = waypoints;
    env.created_at_ms = created_at_ms;
    envelopes_.emplace(rec_id, env);

    wire::RecommendationMsg msg;
    msg.recommendation_id = rec_id;
    msg.target_uuid = target;
    msg.waypoints.reserve(waypoints.size());
    for (const auto& w : waypoints) {
      wire::Waypoint wp;
      wp.timestamp_ms = w.timestamp_ms;
      const LatLon ll = unproject_coordinates(w.position, config_.lane.origin);
      wp.lat = ll.lat;
      wp.lon = ll.lon;
      wp.speed_mps = w.speed_mps;
      wp.acceleration_mps2 = w.accel_mps2;
      wp.heading_deg = w.heading_deg;
      msg.waypoints.push_back(wp);
    }
    log_.append("emitted",
                {{"recommendation_id", rec_id}, {"target", target}});
    return wire::to_line(msg);
  }

  OrchestratorConfig config_;
  std::optional<rl::DuelingNetwork> model_;
  KnowledgeBase kb_;
  EventLog log_;

  struct Flight {
    bool in_flight{false};
    std::uint64_t queued_epoch{0};  // 0 = nothing queued
  };

  mutable std::mutex mu_;
  std::condition_variable cv_work_, cv_idle_;
  std::map<std::string, Flight> flights_;
  std::deque<std::string> queue_;
  std::map<std::string, RecommendationEnvelope> envelopes_;
  std::function<void(const std::string&)> sink_;
  std::vector<std::thread> workers_;
  std::uint64_t rec_counter_{0};
  std::int64_t now_ms_{0};
  int active_{0};
  bool stopped_{false};
};

}  // namespace lmo::orch
