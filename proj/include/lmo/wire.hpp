#pragma once

// NDJSON wire protocol: one JSON object per line, UTF-8, LF-terminated,
// 64 KiB maximum line length. Shared by the orchestrator and simulator.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"
#include "lmo/geo.hpp"

namespace lmo::wire {

using json = nlohmann::json;

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;

struct VehicleUpdate {
  std::string uuid;
  std::int64_t timestamp_ms{0};
  double lat{0.0};
  double lon{0.0};
  double speed_mps{0.0};
  double acceleration_mps2{0.0};
  double heading_deg{0.0};
  int lane_id{0};
  double length_m{0.0};
  double width_m{0.0};
  bool connected{false};
  StateSource source{StateSource::onboard};
};

struct ManeuverFeedback {
  std::string recommendation_id;
  std::string status;  // accept | reject | abort
};

struct Boundary {
  double min_lat{0.0};
  double min_lon{0.0};
  double max_lat{0.0};
  double max_lon{0.0};

  bool contains(double lat, double lon) const {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
  }
};

struct SubscriptionRequest {
  Boundary boundary;
};

struct Waypoint {
  std::int64_t timestamp_ms{0};
  double lat{0.0};
  double lon{0.0};
  double speed_mps{0.0};
  double acceleration_mps2{0.0};
  double heading_deg{0.0};
};

struct RecommendationMsg {
  std::string recommendation_id;
  std::string target_uuid;
  std::vector<Waypoint> waypoints;
};

struct ParseReject {
  std::string reason;  // malformed_json | unknown_type | validation
  std::string detail;
};

using Inbound = std::variant<VehicleUpdate, ManeuverFeedback, SubscriptionRequest,
                             RecommendationMsg, ParseReject>;

inline StateSource parse_source(const std::string& s) {
  if (s == "obu") return StateSource::onboard;
  if (s == "camera") return StateSource::camera;
  if (s == "fused") return StateSource::fused;
  throw validation_error("unknown source: " + s);
}

inline json to_json(const VehicleUpdate& u) {
  return json{{"type", "vehicle_update"},
              {"uuid", u.uuid},
              {"timestamp_ms", u.timestamp_ms},
              {"lat", u.lat},
              {"lon", u.lon},
              {"speed_mps", u.speed_mps},
              {"acceleration_mps2", u.acceleration_mps2},
              {"heading_deg", u.heading_deg},
              {"lane_id", u.lane_id},
              {"length_m", u.length_m},
              {"width_m", u.width_m},
              {"connected", u.connected},
              {"source", to_string(u.source)}};
}

inline json to_json(const ManeuverFeedback& f) {
  return json{{"type", "maneuver_feedback"},
              {"recommendation_id", f.recommendation_id},
              {"status", f.status}};
}

inline json to_json(const SubscriptionRequest& s) {
  return json{{"type", "subscription_request"},
              {"boundary", {{"min_lat", s.boundary.min_lat},
                            {"min_lon", s.boundary.min_lon},
                            {"max_lat", s.boundary.max_lat},
                            {"max_lon", s.boundary.max_lon}}}};
}

inline json to_json(const Waypoint& w) {
  return json{{"timestamp_ms", w.timestamp_ms}, {"lat", w.lat},
              {"lon", w.lon},                   {"speed_mps", w.speed_mps},
              {"acceleration_mps2", w.acceleration_mps2},
              {"heading_deg", w.heading_deg}};
}

inline json to_json(const RecommendationMsg& r) {
  json wps = json::array();
  for (const auto& w : r.waypoints) wps.push_back(to_json(w));
  return json{{"type", "recommendation"},
              {"recommendation_id", r.recommendation_id},
              {"target_uuid", r.target_uuid},
              {"waypoints", std::move(wps)}};
}

template <typename T>
std::string to_line(const T& msg) {
  return to_json(msg).dump() + "\n";
}

namespace detail {

inline double require_num(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw validation_error(std::string("missing or non-numeric field: ") + key);
  return it->get<double>();
}

inline std::string require_str(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw validation_error(std::string("missing or non-string field: ") + key);
  return it->get<std::string>();
}

inline bool require_bool(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_boolean())
    throw validation_error(std::string("missing or non-boolean field: ") + key);
  return it->get<bool>();
}

}  // namespace detail

inline VehicleUpdate parse_vehicle_update(const json& j) {
  VehicleUpdate u;
  u.uuid = detail::require_str(j, "uuid");
  u.timestamp_ms = static_cast<std::int64_t>(detail::require_num(j, "timestamp_ms"));
  u.lat = detail::require_num(j, "lat");
  u.lon = detail::require_num(j, "lon");
  u.speed_mps = detail::require_num(j, "speed_mps");
  u.acceleration_mps2 = detail::require_num(j, "acceleration_mps2");
  u.heading_deg = detail::require_num(j, "heading_deg");
  u.lane_id = static_cast<int>(detail::require_num(j, "lane_id"));
  u.length_m = detail::require_num(j, "length_m");
  u.width_m = detail::require_num(j, "width_m");
  u.connected = detail::require_bool(j, "connected");
  u.source = parse_source(detail::require_str(j, "source"));
  if (u.uuid.empty()) throw validation_error("uuid must be nonempty");
  if (u.timestamp_ms < 0) throw validation_error("timestamp_ms must be >= 0");
  if (u.speed_mps < 0) throw validation_error("speed_mps must be >= 0");
  if (u.heading_deg < 0 || u.heading_deg >= 360.0)
    throw validation_error("heading_deg must be in [0, 360)");
  if (u.length_m <= 0 || u.width_m <= 0)
    throw validation_error("vehicle dimensions must be > 0");
  if (std::abs(u.lat) > 90.0 || std::abs(u.lon) > 180.0)
    throw validation_error("coordinates out of range");
  return u;
}

inline ManeuverFeedback parse_feedback(const json& j) {
  ManeuverFeedback f;
  f.recommendation_id = detail::require_str(j, "recommendation_id");
  f.status = detail::require_str(j, "status");
  if (f.status != "accept" && f.status != "reject" && f.status != "abort")
    throw validation_error("feedback status must be accept|reject|abort");
  return f;
}

inline SubscriptionRequest parse_subscription(const json& j) {
  const auto it = j.find("boundary");
  if (it == j.end() || !it->is_object())
    throw validation_error("missing boundary object");
  SubscriptionRequest s;
  s.boundary.min_lat = detail::require_num(*it, "min_lat");
  s.boundary.min_lon = detail::require_num(*it, "min_lon");
  s.boundary.max_lat = detail::require_num(*it, "max_lat");
  s.boundary.max_lon = detail::require_num(*it, "max_lon");
  if (s.boundary.min_lat > s.boundary.max_lat ||
      s.boundary.min_lon > s.boundary.max_lon)
    throw validation_error("boundary min exceeds max");
  return s;
}

inline RecommendationMsg parse_recommendation(const json& j) {
  RecommendationMsg r;
  r.recommendation_id = detail::require_str(j, "recommendation_id");
  r.target_uuid = detail::require_str(j, "target_uuid");
  const auto it = j.find("waypoints");
  if (it == j.end() || !it->is_array())
    throw validation_error("missing waypoints array");
  for (const auto& wj : *it) {
    Waypoint w;
    w.timestamp_ms = static_cast<std::int64_t>(detail::require_num(wj, "timestamp_ms"));
    w.lat = detail::require_num(wj, "lat");
    w.lon = detail::require_num(wj, "lon");
    w.speed_mps = detail::require_num(wj, "speed_mps");
    w.acceleration_mps2 = detail::require_num(wj, "acceleration_mps2");
    w.heading_deg = detail::require_num(wj, "heading_deg");
    r.waypoints.push_back(w);
  }
  return r;
}

// Parse one wire line. Errors come back as ParseReject values so a bad
// line never tears down the connection.
inline Inbound parse_line(const std::string& line) {
  if (line.size() > kMaxLineBytes)
    return ParseReject{"oversized_line", "line exceeds 64 KiB"};
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) return ParseReject{"malformed_json", "unparseable line"};
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    return ParseReject{"unknown_type", "missing type field"};
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "vehicle_update") return parse_vehicle_update(j);
    if (type == "maneuver_feedback") return parse_feedback(j);
    if (type == "subscription_request") return parse_subscription(j);
    if (type == "recommendation") return parse_recommendation(j);
  } catch (const validation_error& e) {
    return ParseReject{"validation", e.what()};
  }
  return ParseReject{"unknown_type", type};
}

inline VehicleState to_state(const VehicleUpdate& u, GeoOrigin origin) {
  VehicleState s;
  s.vehicle_id = u.uuid;
  s.timestamp_ms = u.timestamp_ms;
  s.lat = u.lat;
  s.lon = u.lon;
  s.position = project_coordinates(u.lat, u.lon, origin);
  s.speed_mps = u.speed_mps;
  s.accel_mps2 = u.acceleration_mps2;
  s.heading_deg = u.heading_deg;
  s.lane_id = u.lane_id;
  s.length_m = u.length_m;
  s.width_m = u.width_m;
  s.connected = u.connected;
  s.source = u.source;
  return s;
}

inline VehicleUpdate from_state(const VehicleState& s, GeoOrigin origin) {
  VehicleUpdate u;
  u.uuid = s.vehicle_id;
  u.timestamp_ms = s.timestamp_ms;
  const LatLon ll = unproject_coordinates(s.position, origin);
  u.lat = ll.lat;
  u.lon = ll.lon;
  u.speed_mps = s.speed_mps;
  u.acceleration_mps2 = s.accel_mps2;
  u.heading_deg = s.heading_deg;
  u.lane_id = s.lane_id;
  u.length_m = s.length_m;
  u.width_m = s.width_m;
  u.connected = s.connected;
  u.source = s.source;
  return u;
}

}  // namespace lmo::wire
