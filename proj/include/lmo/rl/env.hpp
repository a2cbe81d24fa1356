#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/geo.hpp"
#include "lmo/rng.hpp"

namespace lmo::rl {

inline constexpr int kNumActions = 15;
inline constexpr std::int64_t kTickMs = 100;
inline constexpr double kTickS = 0.1;
inline constexpr double kMaxSpeedMps = 30.0;

// 5 longitudinal accelerations crossed with 3 per-tick heading deltas;
// index = accel_index * 3 + heading_index
inline constexpr double kAccelGrid[5] = {-3.0, -1.5, 0.0, 1.5, 3.0};
inline constexpr double kHeadingDeltaGrid[3] = {-4.0, 0.0, 4.0};

inline double action_accel(int action) { return kAccelGrid[action / 3]; }
inline double action_heading_delta(int action) {
  return kHeadingDeltaGrid[action % 3];
}

// Advances one vehicle by one 100 ms tick: heading turns first, speed
// integrates the commanded acceleration, position follows the new velocity.
// The environment and the greedy rollout share this exact function so the
// policy predicts the same motion the environment executes.
inline void advance_vehicle(VehicleState& v, double accel_mps2,
                            double heading_delta_deg, double dt_s = kTickS) {
  v.heading_deg = wrap_heading(v.heading_deg + heading_delta_deg);
  const double new_speed =
      std::clamp(v.speed_mps + accel_mps2 * dt_s, 0.0, kMaxSpeedMps);
  v.accel_mps2 = (new_speed - v.speed_mps) / dt_s;  // after clamping
  v.speed_mps = new_speed;
  v.position = v.position + heading_to_unit(v.heading_deg) * (new_speed * dt_s);
  v.timestamp_ms += static_cast<std::int64_t>(dt_s * 1000.0 + 0.5);
}

// Straight target-lane frame: a point on the centerline plus the unit lane
// direction. All longitudinal/lateral coordinates are relative to it.
struct LaneFrame {
  Vec2 centerline_point;
  Vec2 axis;  // unit

  double longitudinal(Vec2 p) const { return (p - centerline_point).dot(axis); }
  double lateral(Vec2 p) const {
    return (p - centerline_point).dot(axis.right_normal());
  }
  Vec2 point_at(double s) const { return centerline_point + axis * s; }
  double heading() const { return unit_to_heading(axis); }
};

// Midpoint of the slot between P's rear bumper and F's front bumper,
// projected onto the target centerline.
inline Vec2 slot_midpoint(const VehicleState& p, const VehicleState& f,
                          const LaneFrame& lane) {
  const double p_rear = lane.longitudinal(p.position) - p.length_m / 2.0;
  const double f_front = lane.longitudinal(f.position) + f.length_m / 2.0;
  return lane.point_at((p_rear + f_front) / 2.0);
}

inline double distance_to_slot(const VehicleState& m, const VehicleState& p,
                               const VehicleState& f, const LaneFrame& lane) {
  return (m.position - slot_midpoint(p, f, lane)).norm();
}

// 8-component normalized state; every component is clamped to [-1, 1]
inline std::vector<double> encode_state(const VehicleState& m,
                                        const VehicleState& p,
                                        const VehicleState& f,
                                        const LaneFrame& lane) {
  const double s_m = lane.longitudinal(m.position);
  const double s_p = lane.longitudinal(p.position);
  const double s_f = lane.longitudinal(f.position);
  auto clamp1 = [](double v) { return std::clamp(v, -1.0, 1.0); };
  return {
      clamp1((s_p - s_m) / 50.0),
      clamp1((m.speed_mps - p.speed_mps) / 15.0),
      clamp1((s_m - s_f) / 50.0),
      clamp1((f.speed_mps - m.speed_mps) / 15.0),
      clamp1(distance_to_slot(m, p, f, lane) / 100.0),
      clamp1(m.speed_mps / 30.0),
      clamp1(lane.lateral(m.position) / 4.0),
      clamp1(heading_error_deg(m.heading_deg, lane.heading()) / 30.0),
  };
}

enum class Outcome { ongoing, success, violation, timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::ongoing: return "ongoing";
    case Outcome::success: return "success";
    case Outcome::violation: return "violation";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct EnvParams {
  SafetyParams safety{};
  double success_lateral_m{0.3};
  double success_heading_deg{6.0};
  double encroach_lateral_m{2.0};  // inside this band, overlap is a collision
  int max_ticks{70};
  // synthetic episode sampling ranges
  double gap_min_m{8.0};
  double gap_max_m{40.0};
  double speed_min_mps{5.0};
  double speed_max_mps{15.0};
  double ramp_offset_m{3.6};
  double start_span_m{12.0};  // M starts within +-span of the slot midpoint
};

// M has settled into the slot: laterally on the centerline, aligned with
// the lane, and holding headway-safe gaps to both neighbours.
inline bool merge_success(const VehicleState& m, const VehicleState& p,
                          const VehicleState& f, const LaneFrame& lane,
                          const EnvParams& params) {
  return std::abs(lane.lateral(m.position)) <= params.success_lateral_m &&
         std::abs(heading_error_deg(m.heading_deg, lane.heading())) <=
             params.success_heading_deg &&
         is_safe_slot(m, p, f, lane.axis, params.safety);
}

// M overlaps a neighbour longitudinally while inside the lane corridor.
inline bool safety_violation(const VehicleState& m, const VehicleState& p,
                             const VehicleState& f, const LaneFrame& lane,
                             const EnvParams& params) {
  if (std::abs(lane.lateral(m.position)) >= params.encroach_lateral_m)
    return false;
  return longitudinal_gap(m, p, lane.axis) < 0.0 ||
         longitudinal_gap(f, m, lane.axis) < 0.0;
}

enum class RewardVariant { positive, negative };

inline RewardVariant variant_from_string(const std::string& s) {
  if (s == "positive") return RewardVariant::positive;
  if (s == "negative") return RewardVariant::negative;
  throw validation_error("unknown reward variant: " + s);
}

inline const char* to_string(RewardVariant v) {
  return v == RewardVariant::positive ? "positive" : "negative";
}

// Distance-shaped reward against the episode's starting distance d0, with
// terminal clamps: violations score 0, success scores 1 (positive variant).
// The negative variant is the same signal shifted down by one.
inline double reward_positive(double distance, double d0, Outcome outcome) {
  if (outcome == Outcome::violation) return 0.0;
  if (outcome == Outcome::success) return 1.0;
  return std::clamp(1.0 - distance / d0, 0.0, 1.0);
}

inline double shift_reward(double r_pos, RewardVariant variant) {
  return variant == RewardVariant::positive ? r_pos : r_pos - 1.0;
}

// One merge episode: P and F roll down the target lane at their sampled
// speeds while the agent drives M from the ramp offset into the slot.
class MergeEnv {
 public:
  explicit MergeEnv(EnvParams params = {}) : params_(params) {
    lane_.centerline_point = {0.0, 0.0};
    lane_.axis = {0.0, 1.0};
  }

  const EnvParams& params() const { return params_; }
  const LaneFrame& lane() const { return lane_; }
  const VehicleState& m() const { return m_; }
  const VehicleState& p() const { return p_; }
  const VehicleState& f() const { return f_; }
  double d0() const { return d0_; }
  int ticks() const { return ticks_; }
  Outcome outcome() const { return outcome_; }

  // Samples episodes until one passes the feasibility screen: the slot must
  // be wide enough to hold M with headway-safe margins at the lane speed,
  // and the starting distance d0 must be positive.
  std::vector<double> reset(Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      sample_episode(rng);
      const double slot = longitudinal_gap(f_, p_, lane_.axis);
      const double needed = m_.length_m +
                            params_.safety.required_gap(lane_speed_) +
                            params_.safety.required_gap(lane_speed_);
      if (slot < needed) continue;
      d0_ = distance_to_slot(m_, p_, f_, lane_);
      if (d0_ <= 0.0) continue;
      if (merge_success(m_, p_, f_, lane_, params_)) continue;  // born done
      ticks_ = 0;
      outcome_ = Outcome::ongoing;
      return encode_state(m_, p_, f_, lane_);
    }
    throw validation_error("episode sampling failed feasibility 1000 times");
  }

  struct StepResult {
    std::vector<double> next_state;
    double reward_positive{0.0};
    bool terminal{false};
    Outcome outcome{Outcome::ongoing};
  };

  StepResult step(int action) {
    if (outcome_ != Outcome::ongoing)
      throw validation_error("step on finished episode");
    if (action < 0 || action >= kNumActions)
      throw validation_error("action index out of range");
    advance_vehicle(m_, action_accel(action), action_heading_delta(action));
    advance_vehicle(p_, 0.0, 0.0);
    advance_vehicle(f_, 0.0, 0.0);
    ++ticks_;

    if (safety_violation(m_, p_, f_, lane_, params_)) outcome_ = Outcome::violation;
    else if (merge_success(m_, p_, f_, lane_, params_)) outcome_ = Outcome::success;
    else if (ticks_ >= params_.max_ticks) outcome_ = Outcome::timeout;

    StepResult r;
    r.next_state = encode_state(m_, p_, f_, lane_);
    r.reward_positive =
        reward_positive(distance_to_slot(m_, p_, f_, lane_), d0_, outcome_);
    r.terminal = outcome_ != Outcome::ongoing;
    r.outcome = outcome_;
    return r;
  }

 private:
  void sample_episode(Rng& rng) {
    lane_speed_ = rng.uniform(params_.speed_min_mps, params_.speed_max_mps);
    const double gap = rng.uniform(params_.gap_min_m, params_.gap_max_m);
    const double m_speed = rng.uniform(params_.speed_min_mps, params_.speed_max_mps);
    const double m_offset = rng.uniform(-params_.start_span_m, params_.start_span_m);

    f_ = VehicleState{};
    f_.vehicle_id = "F";
    f_.position = lane_.point_at(0.0);
    f_.speed_mps = lane_speed_;
    f_.heading_deg = lane_.heading();
    f_.lane_id = 1;

    p_ = VehicleState{};
    p_.vehicle_id = "P";
    p_.position = lane_.point_at(f_.length_m / 2.0 + gap + 2.25);
    p_.speed_mps = lane_speed_;
    p_.heading_deg = lane_.heading();
    p_.lane_id = 1;

    const double mid_s =
        lane_.longitudinal(slot_midpoint(p_, f_, lane_));
    m_ = VehicleState{};
    m_.vehicle_id = "M";
    m_.position = lane_.point_at(mid_s + m_offset) +
                  lane_.axis.right_normal() * params_.ramp_offset_m;
    m_.speed_mps = m_speed;
    m_.heading_deg = lane_.heading();
    m_.lane_id = 2;
  }

  EnvParams params_;
  LaneFrame lane_;
  VehicleState m_, p_, f_;
  double lane_speed_{0.0};
  double d0_{0.0};
  int ticks_{0};
  Outcome outcome_{Outcome::timeout};
};

}  // namespace lmo::rl
