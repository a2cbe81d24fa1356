#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "lmo/error.hpp"

namespace lmo {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr std::int64_t kTimeAlignToleranceMs = 100;
inline constexpr std::int64_t kTickMs = 100;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// wrap into [0, 360)
inline double wrap_heading(double deg) {
  double h = std::fmod(deg, 360.0);
  if (h < 0) h += 360.0;
  return h == 360.0 ? 0.0 : h;
}

struct Vec2 {
  double x{0.0};  // m east
  double y{0.0};  // m north

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  Vec2 unit() const {
    const double n = norm();
    return n > 0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  // clockwise 90 degrees: the right-hand normal of a travel direction
  Vec2 right_normal() const { return {y, -x}; }
};

// heading in degrees clockwise from north -> unit direction (east, north)
inline Vec2 heading_to_unit(double heading_deg) {
  const double r = deg2rad(heading_deg);
  return {std::sin(r), std::cos(r)};
}

inline double unit_to_heading(Vec2 dir) {
  return wrap_heading(rad2deg(std::atan2(dir.x, dir.y)));
}

// signed difference a - b wrapped into (-180, 180]
inline double heading_error_deg(double a_deg, double b_deg) {
  double d = std::fmod(a_deg - b_deg, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

// signed bearing of `disp` relative to `axis`, degrees, clockwise positive
inline double relative_bearing_deg(Vec2 axis, Vec2 disp) {
  const double lon = disp.dot(axis.unit());
  const double lat_right = disp.dot(axis.unit().right_normal());
  if (lon == 0.0 && lat_right == 0.0) return 0.0;
  return rad2deg(std::atan2(lat_right, lon));
}

enum class StateSource { onboard, camera, fused };

inline const char* to_string(StateSource s) {
  switch (s) {
    case StateSource::onboard: return "obu";
    case StateSource::camera: return "camera";
    default: return "fused";
  }
}

struct VehicleState {
  std::string vehicle_id;
  std::int64_t timestamp_ms{0};
  Vec2 position;       // local plane
  double lat{0.0};     // degrees, set when sourced externally
  double lon{0.0};
  double speed_mps{0.0};
  double accel_mps2{0.0};
  double heading_deg{0.0};  // [0, 360) clockwise from north
  int lane_id{0};
  double length_m{4.5};
  double width_m{1.8};
  bool connected{true};
  StateSource source{StateSource::onboard};
};

inline void validate(const VehicleState& s) {
  if (s.speed_mps < 0) throw validation_error("speed must be >= 0");
  if (s.length_m <= 0) throw validation_error("length must be > 0");
  if (s.width_m <= 0) throw validation_error("width must be > 0");
  if (s.heading_deg < 0 || s.heading_deg >= 360.0)
    throw validation_error("heading must be in [0, 360)");
  if (s.timestamp_ms < 0) throw validation_error("timestamp must be >= 0");
}

struct MergeTriple {
  std::string merging;    // M
  std::string preceding;  // P
  std::string following;  // F
  int target_lane{0};
  Vec2 merge_point;
  int merge_frame_index{0};  // in [0, 69]
};

struct SafetyParams {
  double standstill_gap_m{1.0};  // s0
  double time_headway_s{0.5};    // tau

  double required_gap(double speed_mps) const {
    return standstill_gap_m + time_headway_s * speed_mps;
  }
};

struct GeoOrigin {
  double lat{0.0};
  double lon{0.0};
};

struct LatLon {
  double lat{0.0};
  double lon{0.0};
};

// Equirectangular projection about `origin`. Adequate for scenes within
// ~2 km of the origin (sub-centimetre error at that range).
inline Vec2 project_coordinates(double lat, double lon, GeoOrigin origin) {
  if (std::abs(lat) > 90.0 || std::abs(lon) > 180.0)
    throw validation_error("coordinates out of range");
  if (std::abs(origin.lat) > 90.0 || std::abs(origin.lon) > 180.0)
    throw validation_error("origin out of range");
  const double x =
      kEarthRadiusM * deg2rad(lon - origin.lon) * std::cos(deg2rad(origin.lat));
  const double y = kEarthRadiusM * deg2rad(lat - origin.lat);
  return {x, y};
}

inline LatLon unproject_coordinates(Vec2 p, GeoOrigin origin) {
  const double lat = origin.lat + rad2deg(p.y / kEarthRadiusM);
  const double lon =
      origin.lon + rad2deg(p.x / (kEarthRadiusM * std::cos(deg2rad(origin.lat))));
  return {lat, lon};
}

// Bumper-to-bumper distance along lane_axis; negative means overlap.
inline double longitudinal_gap(const VehicleState& rear,
                               const VehicleState& front, Vec2 lane_axis) {
  if (std::llabs(rear.timestamp_ms - front.timestamp_ms) > kTimeAlignToleranceMs)
    throw staleness_error("states not time-aligned within 100 ms");
  const Vec2 axis = lane_axis.unit();
  const double centroid_dist = (front.position - rear.position).dot(axis);
  return centroid_dist - (front.length_m + rear.length_m) / 2.0;
}

// True iff M fits between F and P with headway-safe gaps on both sides.
// M must be strictly between the other two along the lane axis.
inline bool is_safe_slot(const VehicleState& m, const VehicleState& p,
                         const VehicleState& f, Vec2 lane_axis,
                         const SafetyParams& params = {}) {
  const Vec2 axis = lane_axis.unit();
  const double s_m = m.position.dot(axis);
  const double s_p = p.position.dot(axis);
  const double s_f = f.position.dot(axis);
  if (!(s_f < s_m && s_m < s_p)) return false;
  return longitudinal_gap(m, p, axis) >= params.required_gap(m.speed_mps) &&
         longitudinal_gap(f, m, axis) >= params.required_gap(f.speed_mps);
}

// Piecewise-linear lane centerline, arc-length parameterised.
class LanePolyline {
 public:
  LanePolyline() = default;
  LanePolyline(int id, std::vector<Vec2> points)
      : id_(id), points_(std::move(points)) {
    if (points_.size() < 2)
      throw validation_error("lane polyline needs at least 2 points");
    cum_.resize(points_.size(), 0.0);
    for (std::size_t i = 1; i < points_.size(); ++i) {
      cum_[i] = cum_[i - 1] + (points_[i] - points_[i - 1]).norm();
    }
    if (cum_.back() <= 0) throw validation_error("lane polyline has zero length");
  }

  int id() const { return id_; }
  double length() const { return cum_.back(); }
  const std::vector<Vec2>& points() const { return points_; }

  struct Projection {
    double s{0.0};            // arc length along the lane
    double lateral_m{0.0};    // signed offset, right of travel positive
    std::size_t segment{0};
  };

  Projection project(Vec2 p) const {
    Projection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const Vec2 a = points_[i];
      const Vec2 d = points_[i + 1] - a;
      const double len2 = d.dot(d);
      double t = len2 > 0 ? (p - a).dot(d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const Vec2 q = a + d * t;
      const double d2 = (p - q).dot(p - q);
      if (d2 < best_d2) {
        best_d2 = d2;
        best.segment = i;
        best.s = cum_[i] + t * std::sqrt(len2);
        const Vec2 tangent = d.unit();
        best.lateral_m = (p - q).dot(tangent.right_normal());
      }
    }
    return best;
  }

  Vec2 tangent_at(double s) const {
    const std::size_t i = segment_for(s);
    return (points_[i + 1] - points_[i]).unit();
  }

  Vec2 point_at(double s) const {
    const std::size_t i = segment_for(s);
    const double seg_len = cum_[i + 1] - cum_[i];
    const double t = seg_len > 0 ? (std::clamp(s, 0.0, length()) - cum_[i]) / seg_len : 0.0;
    return points_[i] + (points_[i + 1] - points_[i]) * t;
  }

  double heading_deg_at(double s) const { return unit_to_heading(tangent_at(s)); }

 private:
  std::size_t segment_for(double s) const {
    const double sc = std::clamp(s, 0.0, length());
    std::size_t i = 0;
    while (i + 2 < points_.size() && cum_[i + 1] < sc) ++i;
    return i;
  }

  int id_{0};
  std::vector<Vec2> points_;
  std::vector<double> cum_;
};

}  // namespace lmo
