#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lmo/geo.hpp"
#include "lmo/rl/policy.hpp"

namespace lmo::orch {

inline constexpr double kAccelBoundMps2 = 4.5;

struct CheckResult {
  bool pass{false};
  std::string reason;  // empty on pass: accel_bound | unsafe_slot | empty_plan
};

// Extrapolates a neighbour at constant velocity along its heading.
inline VehicleState extrapolate_cv(const VehicleState& v, std::int64_t to_ms) {
  VehicleState out = v;
  const double dt = (to_ms - v.timestamp_ms) / 1000.0;
  out.position = v.position + heading_to_unit(v.heading_deg) * (v.speed_mps * dt);
  out.timestamp_ms = to_ms;
  out.accel_mps2 = 0.0;
  return out;
}

// A recommendation passes iff every planned acceleration stays within the
// comfort bound and the final waypoint leaves M in a headway-safe slot
// against P and F extrapolated at constant velocity.
inline CheckResult check_recommendation(const rl::TrajectoryRecommendation& rec,
                                        const VehicleState& m,
                                        const VehicleState& p,
                                        const VehicleState& f,
                                        const rl::LaneFrame& lane,
                                        const SafetyParams& safety = {}) {
  if (rec.waypoints.empty()) return {false, "empty_plan"};
  for (const auto& w : rec.waypoints)
    if (std::abs(w.accel_mps2) > kAccelBoundMps2) return {false, "accel_bound"};
  for (const auto& w : rec.f_slowdown)
    if (std::abs(w.accel_mps2) > kAccelBoundMps2) return {false, "accel_bound"};

  const auto& last = rec.waypoints.back();
  VehicleState final_m = m;
  final_m.position = last.position;
  final_m.speed_mps = last.speed_mps;
  final_m.heading_deg = last.heading_deg;
  final_m.timestamp_ms = last.timestamp_ms;
  const VehicleState p_pred = extrapolate_cv(p, last.timestamp_ms);
  const VehicleState f_pred = extrapolate_cv(f, last.timestamp_ms);
  if (!is_safe_slot(final_m, p_pred, f_pred, lane.axis, safety))
    return {false, "unsafe_slot"};
  return {true, ""};
}

}  // namespace lmo::orch
