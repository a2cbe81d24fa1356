#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lmo/rl/env.hpp"
#include "lmo/rl/network.hpp"

namespace lmo::rl {

struct LocalWaypoint {
  std::int64_t timestamp_ms{0};
  Vec2 position;
  double speed_mps{0.0};
  double accel_mps2{0.0};  // the commanded acceleration for this tick
  double heading_deg{0.0};
};

struct TrajectoryRecommendation {
  bool ok{false};
  std::string reason;  // no_merging | no_preceding | no_following when !ok
  std::vector<LocalWaypoint> waypoints;  // for M, one per 100 ms tick
  std::vector<LocalWaypoint> f_slowdown;  // for F, only when the slot is short
  bool success{false};  // safe slot holds at the final waypoint
  Outcome outcome{Outcome::timeout};
};

inline constexpr int kMaxHorizonTicks = 70;
inline constexpr double kFollowerSlowdownMps2 = -0.5;

namespace detail {

inline LocalWaypoint waypoint_of(const VehicleState& v, double commanded_accel) {
  LocalWaypoint w;
  w.timestamp_ms = v.timestamp_ms;
  w.position = v.position;
  w.speed_mps = v.speed_mps;
  w.accel_mps2 = commanded_accel;
  w.heading_deg = v.heading_deg;
  return w;
}

}  // namespace detail

// Greedy argmax-Q rollout of the merging vehicle through the shared kinematic
// model, one waypoint per tick starting 100 ms after the snapshot. The rollout
// stops early on predicted success or safety violation; if the initial slot is
// too short for M, a mild constant slow-down trajectory for F is attached
// until the predicted slot becomes safe.
inline TrajectoryRecommendation recommend_trajectory(
    const DuelingNetwork& net, const std::optional<VehicleState>& m_in,
    const std::optional<VehicleState>& p_in,
    const std::optional<VehicleState>& f_in, const LaneFrame& lane,
    int horizon_ticks, const EnvParams& params = {}) {
  TrajectoryRecommendation out;
  if (!m_in) {
    out.reason = "no_merging";
    return out;
  }
  if (!p_in) {
    out.reason = "no_preceding";
    return out;
  }
  if (!f_in) {
    out.reason = "no_following";
    return out;
  }
  if (horizon_ticks < 1 || horizon_ticks > kMaxHorizonTicks)
    throw validation_error("horizon_ticks out of range");

  VehicleState m = *m_in, p = *p_in, f = *f_in;
  out.ok = true;

  if (merge_success(m, p, f, lane, params)) {
    advance_vehicle(m, 0.0, 0.0);
    out.waypoints.push_back(detail::waypoint_of(m, 0.0));
    out.success = true;
    out.outcome = Outcome::success;
    return out;
  }

  const double needed_slot = [&] {
    return m.length_m + params.safety.required_gap(m.speed_mps) +
           params.safety.required_gap(f.speed_mps);
  }();
  const bool slot_short = longitudinal_gap(f, p, lane.axis) < needed_slot;

  out.outcome = Outcome::timeout;
  for (int tick = 0; tick < horizon_ticks; ++tick) {
    const int action = net.greedy_action(encode_state(m, p, f, lane));
    advance_vehicle(m, action_accel(action), action_heading_delta(action));
    advance_vehicle(p, 0.0, 0.0);
    advance_vehicle(f, 0.0, 0.0);
    out.waypoints.push_back(detail::waypoint_of(m, action_accel(action)));
    if (safety_violation(m, p, f, lane, params)) {
      out.outcome = Outcome::violation;
      break;
    }
    if (merge_success(m, p, f, lane, params)) {
      out.outcome = Outcome::success;
      break;
    }
  }
  out.success = out.outcome == Outcome::success;

  if (slot_short) {
    VehicleState ps = *p_in, fs = *f_in;
    const double m_req = params.safety.required_gap(m_in->speed_mps);
    for (int tick = 0; tick < horizon_ticks; ++tick) {
      advance_vehicle(fs, kFollowerSlowdownMps2, 0.0);
      advance_vehicle(ps, 0.0, 0.0);
      out.f_slowdown.push_back(detail::waypoint_of(fs, kFollowerSlowdownMps2));
      const double needed = m_in->length_m + m_req +
                            params.safety.required_gap(fs.speed_mps);
      if (longitudinal_gap(fs, ps, lane.axis) >= needed) break;
    }
  }
  return out;
}

}  // namespace lmo::rl
