#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "lmo/geo.hpp"
#include "lmo/sim/scenario.hpp"
#include "lmo/wire.hpp"

namespace lmo::sim {

inline constexpr double kCarFollowAccelMps2 = 1.0;
inline constexpr double kCarFollowBrakeMps2 = -2.0;
inline constexpr double kHeadingSlewDegPerTick = 4.0;

// Distance covered in one tick under constant commanded acceleration,
// stopping at v = 0 instead of rolling backwards.
inline double tick_displacement(double speed_mps, double accel_mps2, double dt_s) {
  if (speed_mps + accel_mps2 * dt_s < 0.0)
    return accel_mps2 < 0.0 ? -(speed_mps * speed_mps) / (2.0 * accel_mps2) : 0.0;
  return speed_mps * dt_s + 0.5 * accel_mps2 * dt_s * dt_s;
}

// One kinematic step: heading slews toward the command first (bounded per
// tick), then x += v dt + a dt^2 / 2 along the new heading with the speed
// clamped at zero. The stored acceleration is the realized speed change.
inline void vehicle_tick(VehicleState& v, double accel_cmd_mps2,
                         double heading_cmd_deg,
                         double slew_limit_deg = kHeadingSlewDegPerTick,
                         double dt_s = 0.1) {
  const double err = heading_error_deg(heading_cmd_deg, v.heading_deg);
  const double delta = std::clamp(err, -slew_limit_deg, slew_limit_deg);
  v.heading_deg = wrap_heading(v.heading_deg + delta);

  const double disp = tick_displacement(v.speed_mps, accel_cmd_mps2, dt_s);
  const double new_speed = std::max(0.0, v.speed_mps + accel_cmd_mps2 * dt_s);
  v.accel_mps2 = (new_speed - v.speed_mps) / dt_s;
  v.speed_mps = new_speed;
  v.position = v.position + heading_to_unit(v.heading_deg) * disp;
}

struct Command {
  double accel_mps2{0.0};
  double heading_deg{0.0};
  double slew_limit_deg{kHeadingSlewDegPerTick};
};

// Piecewise-constant script lookup: the last segment at or before t rules.
inline Command scripted_command(const std::vector<ScriptSegment>& script,
                                const VehicleState& v, std::int64_t t_ms) {
  Command c{0.0, v.heading_deg, 360.0};
  for (const auto& seg : script) {
    if (seg.t_ms > t_ms) break;
    c.accel_mps2 = seg.accel_mps2;
    c.heading_deg = seg.heading_deg;
  }
  return c;
}

// Gap rule: brake when the bumper gap to the leader falls under
// s0 + tau * v, accelerate toward the desired speed otherwise.
inline Command car_following_command(const VehicleState& v,
                                     const VehicleState* leader,
                                     double desired_speed_mps, Vec2 lane_axis,
                                     const SafetyParams& safety, double dt_s) {
  Command c{0.0, v.heading_deg, 360.0};
  if (leader != nullptr &&
      longitudinal_gap(v, *leader, lane_axis) <
          safety.required_gap(v.speed_mps)) {
    c.accel_mps2 = kCarFollowBrakeMps2;
    return c;
  }
  const double gap_to_desired = (desired_speed_mps - v.speed_mps) / dt_s;
  c.accel_mps2 =
      std::clamp(gap_to_desired, -kCarFollowAccelMps2, kCarFollowAccelMps2);
  return c;
}

// The most recently accepted plan; waypoints are on the 100 ms tick grid
// and carry the command that produces the state at their timestamp.
struct PlanFollower {
  std::vector<wire::Waypoint> waypoints;
  GeoOrigin origin;

  std::optional<wire::Waypoint> at(std::int64_t t_ms) const {
    for (const auto& w : waypoints)
      if (w.timestamp_ms == t_ms) return w;
    return std::nullopt;
  }
};

// Tracks the accepted waypoint for this tick; holds speed and heading when
// the plan has run out.
inline Command agent_command(const VehicleState& v, const PlanFollower& plan,
                             std::int64_t t_ms) {
  const auto wp = plan.at(t_ms);
  if (!wp) return {0.0, v.heading_deg, kHeadingSlewDegPerTick};
  return {wp->acceleration_mps2, wp->heading_deg, kHeadingSlewDegPerTick};
}

}  // namespace lmo::sim
