#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/geo.hpp"
#include "lmo/rl/env.hpp"
#include "lmo/rng.hpp"
#include "lmo/sim/behavior.hpp"
#include "lmo/sim/camera.hpp"
#include "lmo/sim/fusion.hpp"
#include "lmo/sim/gateway.hpp"
#include "lmo/sim/link.hpp"
#include "lmo/sim/scenario.hpp"
#include "lmo/wire.hpp"

namespace lmo::sim {

// Builds an orchestrator config whose lane geometry and coverage boundary
// come from the scenario: the boundary is the bounding box of all lane
// points with a 50 m margin.
inline orch::OrchestratorConfig orchestrator_config_for(
    const Scenario& s, std::int64_t staleness_ms = 1000) {
  orch::OrchestratorConfig cfg;
  cfg.lane.origin = s.origin;
  cfg.lane.target_lane_id = s.target_lane_id;
  cfg.lane.merge_lane_id = s.merge_lane_id;
  const auto& target = s.lane(s.target_lane_id);
  cfg.lane.frame = {target.points().front(), target.tangent_at(0.0)};
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  for (const auto& lane : s.lanes) {
    for (const auto& p : lane.points()) {
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  }
  const double margin = 50.0;
  const LatLon lo = unproject_coordinates({min_x - margin, min_y - margin}, s.origin);
  const LatLon hi = unproject_coordinates({max_x + margin, max_y + margin}, s.origin);
  cfg.lane.boundary = {lo.lat, lo.lon, hi.lat, hi.lon};
  cfg.staleness_ms = staleness_ms;
  cfg.workers = 0;
  return cfg;
}

struct RunOptions {
  std::uint64_t seed{0};
  int quiesce_ms{50};
};

struct RunResult {
  bool merge_completed{false};
  double merge_time_ms{-1.0};
  int violations{0};
  bool aborted{false};
  std::string abort_reason;
  GatewayCounters gateway;
  std::uint64_t recs_emitted{0};    // reply lines read from the orchestrator
  std::uint64_t recs_dropped{0};    // lost on the reply leg
  std::uint64_t recs_received{0};   // arrived at a vehicle
  std::uint64_t recs_accepted{0};
  std::uint64_t recs_rejected{0};
  std::uint64_t feedback_dropped{0};

  int exit_code() const {
    if (violations > 0) return 1;
    if (aborted || !merge_completed) return 2;
    return 0;
  }
};

// Discrete-event simulation around a 100 ms vehicle tick. Every logged
// timestamp is simulated time in milliseconds derived from the scenario,
// the seed, and message contents, so reruns reproduce the log byte for
// byte even when the orchestrator sits behind a real socket.
//
// Reply arrival times cannot be observed from a wall clock without
// breaking that reproducibility, so they are derived instead: a reply is
// attributed to the delivery that triggered it (recommendations point at
// the vehicle state they were computed from), and its receipt time is
// that delivery plus a fresh impairment draw, clamped to stay monotonic
// per the FIFO reply stream and never earlier than the batch it was read
// in. The link is drained to quiescence before simulated time passes the
// earliest possible reply, so computation delay never reorders events.
class SimRunner {
 public:
  SimRunner(Scenario scenario, RunOptions opts)
      : scenario_(std::move(scenario)),
        opts_(opts),
        cam_rng_(derive_seed(opts.seed, 10)),
        update_rng_(derive_seed(opts.seed, 11)),
        reply_rng_(derive_seed(opts.seed, 12)),
        fb_rng_(derive_seed(opts.seed, 13)) {
    const auto& target = scenario_.lane(scenario_.target_lane_id);
    frame_ = {target.points().front(), target.tangent_at(0.0)};
    for (const auto& v : scenario_.vehicles) {
      Unit u;
      u.spec = v;
      u.state = initial_state(v);
      u.plan.origin = scenario_.origin;
      u.merging = v.lane_id == scenario_.merge_lane_id;
      units_.push_back(std::move(u));
    }
  }

  RunResult run(OrchLink& link) {
    try {
      gateway_.subscribe("orchestrator", link.boundary());
      log_event(0.0, "scenario",
                {{"name", scenario_.name},
                 {"seed", opts_.seed},
                 {"duration_ms", scenario_.duration_ms},
                 {"vehicles", units_.size()}});
      push_tick(0);
      while (!done_) {
        if (queue_.empty()) {
          if (!have_written_) break;
          run_drain(link);
          continue;
        }
        if (have_written_ && queue_.top().t >= earliest_reply_) {
          run_drain(link);
          continue;
        }
        const Event e = queue_.top();
        queue_.pop();
        now_ = e.t;
        dispatch(e, link);
      }
      finish();
    } catch (const sim_abort& a) {
      result_.aborted = true;
      result_.abort_reason = a.reason;
      log_event(now_, "abort", {{"reason", a.reason}});
    } catch (const std::exception& e) {
      result_.aborted = true;
      result_.abort_reason = e.what();
      log_event(now_, "abort", {{"reason", result_.abort_reason}});
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const json& a, const json& b) {
                       const double ta = a.at("t").get<double>();
                       const double tb = b.at("t").get<double>();
                       if (ta != tb) return ta < tb;
                       return a.at("seq").get<std::uint64_t>() <
                              b.at("seq").get<std::uint64_t>();
                     });
    result_.gateway = gateway_.counters();
    return result_;
  }

  const std::vector<json>& events() const { return events_; }
  const RunResult& result() const { return result_; }

  void write_log(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open log file for writing: " + path);
    for (const auto& e : events_) out << e.dump() << "\n";
  }

 private:
  struct sim_abort {
    std::string reason;
  };

  struct Unit {
    VehicleSpec spec;
    VehicleState state;
    PlanFollower plan;
    bool merging{false};
    bool completed{false};
  };

  struct Event {
    double t{0.0};
    std::uint64_t seq{0};
    enum Kind { tick, deliver_update, rec_to_vehicle, deliver_feedback } kind{tick};
    std::int64_t tick_ms{0};
    std::string line;
    std::string uuid;            // deliver_update attribution
    std::int64_t state_ms{0};    // deliver_update attribution
    double publish_t{0.0};       // deliver_update attribution
    wire::RecommendationMsg rec;  // rec_to_vehicle payload
    double trigger_publish_t{-1.0};
    std::string feedback_id;
  };

  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  using Key = std::pair<std::string, std::int64_t>;

  struct WrittenRef {
    double publish_t{0.0};
    std::size_t index{0};
  };

  double tick_s() const { return static_cast<double>(scenario_.tick_ms) / 1000.0; }

  void log_event(double t, const char* kind, json fields) {
    fields["t"] = t;
    fields["kind"] = kind;
    fields["seq"] = log_seq_++;
    events_.push_back(std::move(fields));
  }

  void push_tick(std::int64_t t_ms) {
    Event e;
    e.t = static_cast<double>(t_ms);
    e.seq = event_seq_++;
    e.kind = Event::tick;
    e.tick_ms = t_ms;
    queue_.push(std::move(e));
  }

  void arm_drain(double write_t) {
    have_written_ = true;
    earliest_reply_ =
        std::min(earliest_reply_, write_t + scenario_.impairment.latency_ms);
  }

  void run_drain(OrchLink& link) {
    const double floor_t = earliest_reply_;
    have_written_ = false;
    earliest_reply_ = std::numeric_limits<double>::infinity();
    for (const auto& line : link.drain(opts_.quiesce_ms))
      handle_reply(line, floor_t);
  }

  void dispatch(const Event& e, OrchLink& link) {
    switch (e.kind) {
      case Event::tick:
        do_tick(e.tick_ms);
        break;
      case Event::deliver_update:
        link.send(e.line);
        ++gateway_.counters().delivered;
        deliveries_.push_back(e.t);
        written_[{e.uuid, e.state_ms}] = {e.publish_t, deliveries_.size() - 1};
        log_event(e.t, "deliver_update",
                  {{"uuid", e.uuid}, {"state_ms", e.state_ms}, {"line", e.line}});
        arm_drain(e.t);
        break;
      case Event::rec_to_vehicle:
        handle_rec_arrival(e);
        break;
      case Event::deliver_feedback:
        link.send(e.line);
        deliveries_.push_back(e.t);
        log_event(e.t, "deliver_feedback",
                  {{"recommendation_id", e.feedback_id}, {"line", e.line}});
        arm_drain(e.t);
        break;
    }
  }

  const VehicleState* leader_of(const Unit& v) const {
    const double sv = frame_.longitudinal(v.state.position);
    const VehicleState* best = nullptr;
    double best_rel = std::numeric_limits<double>::infinity();
    for (const auto& u : units_) {
      if (&u == &v || u.state.lane_id != v.state.lane_id) continue;
      const double rel = frame_.longitudinal(u.state.position) - sv;
      if (rel > 0.0 && rel < best_rel) {
        best_rel = rel;
        best = &u.state;
      }
    }
    return best;
  }

  std::pair<const VehicleState*, const VehicleState*> target_lane_neighbors(
      const Unit& m) const {
    const double sm = frame_.longitudinal(m.state.position);
    const VehicleState* p = nullptr;
    const VehicleState* f = nullptr;
    double best_p = std::numeric_limits<double>::infinity();
    double best_f = -std::numeric_limits<double>::infinity();
    for (const auto& u : units_) {
      if (&u == &m || u.state.lane_id != scenario_.target_lane_id) continue;
      const double rel = frame_.longitudinal(u.state.position) - sm;
      if (rel > 0.0 && rel < best_p) {
        best_p = rel;
        p = &u.state;
      }
      if (rel <= 0.0 && rel > best_f) {
        best_f = rel;
        f = &u.state;
      }
    }
    return {p, f};
  }

  VehicleState shifted_copy(const VehicleState& base, double offset) const {
    VehicleState s = base;
    s.vehicle_id = offset > 0 ? "far-ahead" : "far-behind";
    s.position = base.position + frame_.axis * offset;
    s.speed_mps = base.speed_mps;
    return s;
  }

  Command command_for(const Unit& u, std::int64_t t_ms) const {
    switch (u.spec.behavior) {
      case Behavior::scripted:
        return scripted_command(u.spec.script, u.state, t_ms - scenario_.tick_ms);
      case Behavior::car_following:
        return car_following_command(u.state, leader_of(u),
                                     u.spec.desired_speed_mps, frame_.axis,
                                     env_params_.safety, tick_s());
      case Behavior::agent_recommended:
      default:
        return agent_command(u.state, u.plan, t_ms);
    }
  }

  void do_tick(std::int64_t t_ms) {
    const double t = static_cast<double>(t_ms);
    if (t_ms > 0) {
      // all commands come from the frozen previous state, then apply at once
      std::vector<Command> cmds(units_.size());
      for (std::size_t i = 0; i < units_.size(); ++i)
        cmds[i] = command_for(units_[i], t_ms);
      for (std::size_t i = 0; i < units_.size(); ++i) {
        vehicle_tick(units_[i].state, cmds[i].accel_mps2, cmds[i].heading_deg,
                     cmds[i].slew_limit_deg, tick_s());
        units_[i].state.timestamp_ms = t_ms;
        units_[i].state.lane_id =
            scenario_.nearest_lane_id(units_[i].state.position);
      }
    }

    for (const auto& u : units_)
      log_event(t, "vehicle_state",
                {{"vehicle_id", u.spec.id},
                 {"role", to_string(u.spec.behavior)},
                 {"connected", u.spec.connected},
                 {"x", u.state.position.x},
                 {"y", u.state.position.y},
                 {"speed_mps", u.state.speed_mps},
                 {"accel_mps2", u.state.accel_mps2},
                 {"heading_deg", u.state.heading_deg},
                 {"lane_id", u.state.lane_id}});

    check_safety_and_completion(t);
    if (done_) return;

    std::vector<VehicleState> truth;
    truth.reserve(units_.size());
    for (const auto& u : units_) truth.push_back(u.state);
    const auto reports = camera_frame(scenario_.camera, truth, t_ms, cam_rng_);
    for (const auto& rep : reports)
      log_event(t, "camera_report",
                {{"x", rep.position.x},
                 {"y", rep.position.y},
                 {"speed_mps", rep.speed_mps},
                 {"heading_deg", rep.heading_deg}});

    std::vector<VehicleState> onboard;
    for (const auto& u : units_)
      if (u.spec.connected) onboard.push_back(u.state);
    auto fused = fusion_.fuse(onboard, reports);
    for (auto& tr : fused.tracks) {
      if (tr.state.source == StateSource::camera)
        tr.state.lane_id = scenario_.nearest_lane_id(tr.state.position);
      log_event(t, "fused_track",
                {{"vehicle_id", tr.state.vehicle_id},
                 {"source", to_string(tr.state.source)},
                 {"constituents", tr.constituents},
                 {"x", tr.state.position.x},
                 {"y", tr.state.position.y},
                 {"lane_id", tr.state.lane_id}});
    }
    for (const auto& a : fused.ambiguities)
      log_event(t, "fusion_ambiguity", {{"detail", a}});

    for (const auto& tr : fused.tracks) {
      const wire::VehicleUpdate u = wire::from_state(tr.state, scenario_.origin);
      const std::string line = wire::to_line(u);
      const auto subs = gateway_.route(u.lat, u.lon);
      log_event(t, "publish",
                {{"uuid", u.uuid},
                 {"state_ms", u.timestamp_ms},
                 {"subscribers", subs.size()}});
      for (std::size_t s = 0; s < subs.size(); ++s) {
        const auto delay = impair_draw(scenario_.impairment, update_rng_);
        if (!delay) {
          ++gateway_.counters().dropped_impairment;
          log_event(t, "drop", {{"leg", "update"}, {"uuid", u.uuid}});
          continue;
        }
        Event e;
        e.t = t + *delay;
        e.seq = event_seq_++;
        e.kind = Event::deliver_update;
        e.line = line;
        e.uuid = u.uuid;
        e.state_ms = u.timestamp_ms;
        e.publish_t = t;
        queue_.push(std::move(e));
      }
    }

    if (t_ms + scenario_.tick_ms <= scenario_.duration_ms)
      push_tick(t_ms + scenario_.tick_ms);
  }

  void check_safety_and_completion(double t) {
    for (auto& u : units_) {
      if (!u.merging || u.completed) continue;
      const auto [p, f] = target_lane_neighbors(u);
      const VehicleState pv = p ? *p : shifted_copy(u.state, 1.0e6);
      const VehicleState fv = f ? *f : shifted_copy(u.state, -1.0e6);
      if (rl::safety_violation(u.state, pv, fv, frame_, env_params_)) {
        ++result_.violations;
        log_event(t, "violation",
                  {{"vehicle_id", u.spec.id},
                   {"lateral_m", frame_.lateral(u.state.position)}});
      }
      if (u.state.lane_id == scenario_.target_lane_id &&
          is_safe_slot(u.state, pv, fv, frame_.axis, env_params_.safety)) {
        u.completed = true;
        if (result_.merge_time_ms < 0.0) result_.merge_time_ms = t;
        log_event(t, "merge_complete",
                  {{"vehicle_id", u.spec.id}, {"lane_id", u.state.lane_id}});
      }
    }
    bool all = true;
    for (const auto& u : units_)
      if (u.merging && !u.completed) all = false;
    done_ = all;
  }

  void handle_reply(const std::string& line, double floor_t) {
    const wire::Inbound msg = wire::parse_line(line);
    const auto* rec = std::get_if<wire::RecommendationMsg>(&msg);
    if (rec == nullptr) {
      if (std::holds_alternative<wire::SubscriptionRequest>(msg)) return;
      throw sim_abort{"unexpected line from orchestrator: " + line};
    }
    ++result_.recs_emitted;
    if (rec->waypoints.empty())
      throw sim_abort{"recommendation with no waypoints"};
    const std::int64_t created_ms =
        rec->waypoints.front().timestamp_ms - scenario_.tick_ms;
    const Key key{rec->target_uuid, created_ms};

    // base = delivery that triggered this reply; repeat citations of the
    // same state walk to the next delivery, unknown citations fall back to
    // the earliest write of the batch
    double base = floor_t;
    if (auto cur = reply_cursor_.find(key); cur != reply_cursor_.end()) {
      cur->second = std::min(cur->second + 1, deliveries_.size() - 1);
      base = deliveries_[cur->second];
    } else if (auto w = written_.find(key); w != written_.end()) {
      reply_cursor_[key] = w->second.index;
      base = deliveries_[w->second.index];
    }
    double trigger_publish = -1.0;
    if (auto w = written_.find(key); w != written_.end())
      trigger_publish = w->second.publish_t;

    const auto delay = impair_draw(scenario_.impairment, reply_rng_);
    if (!delay) {
      ++result_.recs_dropped;
      log_event(base, "rec_dropped",
                {{"recommendation_id", rec->recommendation_id}, {"leg", "reply"}});
      return;
    }
    const double r = std::max({base + *delay, floor_t, last_reply_t_});
    if (r < now_)
      throw sim_abort{"reply receipt precedes current simulated time"};
    last_reply_t_ = r;

    Event e;
    e.t = r;
    e.seq = event_seq_++;
    e.kind = Event::rec_to_vehicle;
    e.rec = *rec;
    e.trigger_publish_t = trigger_publish;
    e.line = line;
    queue_.push(std::move(e));
  }

  void handle_rec_arrival(const Event& e) {
    const auto& rec = e.rec;
    ++result_.recs_received;
    json wps = json::array();
    for (const auto& w : rec.waypoints) wps.push_back(wire::to_json(w));
    const std::int64_t created_ms =
        rec.waypoints.front().timestamp_ms - scenario_.tick_ms;
    log_event(e.t, "rec_received",
              {{"recommendation_id", rec.recommendation_id},
               {"target_uuid", rec.target_uuid},
               {"created_at_ms", created_ms},
               {"trigger_publish_t", e.trigger_publish_t},
               {"waypoints", std::move(wps)}});

    Unit* u = find_unit(rec.target_uuid);
    if (u == nullptr || !u->spec.connected) {
      log_event(e.t, "rec_unroutable",
                {{"recommendation_id", rec.recommendation_id},
                 {"target_uuid", rec.target_uuid}});
      return;
    }

    std::string status = "reject";
    if (u->spec.behavior == Behavior::agent_recommended &&
        static_cast<double>(rec.waypoints.front().timestamp_ms) > e.t) {
      u->plan.waypoints = rec.waypoints;
      status = "accept";
    }
    if (status == "accept")
      ++result_.recs_accepted;
    else
      ++result_.recs_rejected;
    log_event(e.t, "feedback",
              {{"recommendation_id", rec.recommendation_id},
               {"target_uuid", rec.target_uuid},
               {"status", status},
               {"trigger_publish_t", e.trigger_publish_t}});

    // a reject triggers a recalculation upstream; answering duplicates of
    // an already-declined plan window would ping-pong forever
    if (status == "reject") {
      const Key key{rec.target_uuid, created_ms};
      if (!rejected_keys_.insert(key).second) {
        log_event(e.t, "feedback_suppressed",
                  {{"recommendation_id", rec.recommendation_id}});
        return;
      }
    }

    const std::string fline =
        wire::to_line(wire::ManeuverFeedback{rec.recommendation_id, status});
    const auto delay = impair_draw(scenario_.impairment, fb_rng_);
    if (!delay) {
      ++result_.feedback_dropped;
      log_event(e.t, "drop",
                {{"leg", "feedback"}, {"recommendation_id", rec.recommendation_id}});
      return;
    }
    Event f;
    f.t = e.t + *delay;
    f.seq = event_seq_++;
    f.kind = Event::deliver_feedback;
    f.line = fline;
    f.feedback_id = rec.recommendation_id;
    queue_.push(std::move(f));
  }

  Unit* find_unit(const std::string& id) {
    for (auto& u : units_)
      if (u.spec.id == id) return &u;
    return nullptr;
  }

  void finish() {
    bool all = true;
    for (const auto& u : units_)
      if (u.merging && !u.completed) all = false;
    result_.merge_completed = all;
    const auto& g = gateway_.counters();
    log_event(now_, "summary",
              {{"merge_completed", result_.merge_completed},
               {"violations", result_.violations},
               {"published", g.published},
               {"matched", g.matched},
               {"delivered", g.delivered},
               {"dropped_impairment", g.dropped_impairment},
               {"recs_emitted", result_.recs_emitted},
               {"recs_dropped", result_.recs_dropped},
               {"recs_received", result_.recs_received},
               {"recs_accepted", result_.recs_accepted},
               {"recs_rejected", result_.recs_rejected},
               {"feedback_dropped", result_.feedback_dropped}});
  }

  Scenario scenario_;
  RunOptions opts_;
  rl::LaneFrame frame_;
  rl::EnvParams env_params_{};
  std::vector<Unit> units_;
  DataFusion fusion_;
  Gateway gateway_;
  Rng cam_rng_;
  Rng update_rng_;
  Rng reply_rng_;
  Rng fb_rng_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::uint64_t event_seq_{0};
  std::uint64_t log_seq_{0};
  std::vector<json> events_;
  bool done_{false};
  double now_{0.0};
  bool have_written_{false};
  double earliest_reply_{std::numeric_limits<double>::infinity()};
  double last_reply_t_{0.0};
  std::vector<double> deliveries_;
  std::map<Key, WrittenRef> written_;
  std::map<Key, std::size_t> reply_cursor_;
  std::set<Key> rejected_keys_;
  RunResult result_;
};

// Convenience wrapper used by the CLI and tests: run `scenario` against an
// in-process orchestrator carrying `model`.
inline SimRunner run_inproc(const Scenario& scenario, RunOptions opts,
                            std::optional<rl::DuelingNetwork> model,
                            std::int64_t staleness_ms = 1000) {
  InprocLink link(orchestrator_config_for(scenario, staleness_ms),
                  std::move(model));
  SimRunner runner(scenario, opts);
  runner.run(link);
  return runner;
}

}  // namespace lmo::sim
