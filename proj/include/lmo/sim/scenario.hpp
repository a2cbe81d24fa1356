#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"
#include "lmo/geo.hpp"

namespace lmo::sim {

using json = nlohmann::json;

enum class Behavior { scripted, car_following, agent_recommended };

inline Behavior behavior_from_string(const std::string& s) {
  if (s == "scripted") return Behavior::scripted;
  if (s == "car-following") return Behavior::car_following;
  if (s == "agent-recommended") return Behavior::agent_recommended;
  throw format_error("unknown behavior: " + s);
}

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::scripted: return "scripted";
    case Behavior::car_following: return "car-following";
    case Behavior::agent_recommended: return "agent-recommended";
  }
  return "?";
}

// From t_ms onward the vehicle holds this command; segments sorted by t_ms.
struct ScriptSegment {
  std::int64_t t_ms{0};
  double accel_mps2{0.0};
  double heading_deg{0.0};
};

struct VehicleSpec {
  std::string id;
  int lane_id{0};
  Vec2 position;
  double speed_mps{0.0};
  double heading_deg{0.0};
  double length_m{4.5};
  double width_m{1.8};
  bool connected{true};
  Behavior behavior{Behavior::scripted};
  double desired_speed_mps{0.0};      // car-following target speed
  std::vector<ScriptSegment> script;  // scripted command trace
};

struct CameraSpec {
  std::vector<Vec2> polygon;  // empty disables the camera
  double noise_sigma_m{0.25};
};

struct Impairment {
  double latency_ms{0.0};
  double jitter_ms{0.0};
  double loss{0.0};
};

struct Scenario {
  std::string name;
  GeoOrigin origin;
  std::int64_t tick_ms{100};
  std::int64_t duration_ms{0};
  std::vector<LanePolyline> lanes;
  int target_lane_id{0};
  int merge_lane_id{0};
  CameraSpec camera;
  Impairment impairment;
  std::vector<VehicleSpec> vehicles;

  const LanePolyline& lane(int id) const {
    for (const auto& l : lanes)
      if (l.id() == id) return l;
    throw validation_error("no lane with id " + std::to_string(id));
  }

  // Nearest lane by absolute lateral offset; ties keep the listed order.
  int nearest_lane_id(Vec2 p) const {
    int best_id = lanes.front().id();
    double best = std::numeric_limits<double>::infinity();
    for (const auto& l : lanes) {
      const double d = std::abs(l.project(p).lateral_m);
      if (d < best) {
        best = d;
        best_id = l.id();
      }
    }
    return best_id;
  }
};

namespace detail {

inline Vec2 parse_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw format_error(std::string(what) + " must be a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<Vec2> parse_points(const json& j, const char* what) {
  if (!j.is_array()) throw format_error(std::string(what) + " must be an array");
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(parse_point(p, what));
  return out;
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.name = j.value("name", "scenario");
  s.origin.lat = j.at("origin").at("lat").get<double>();
  s.origin.lon = j.at("origin").at("lon").get<double>();
  s.tick_ms = j.value("tick_ms", std::int64_t{100});
  if (s.tick_ms != 100)
    throw validation_error("tick_ms must be 100 to match the dataset rate");
  s.duration_ms = static_cast<std::int64_t>(j.at("duration_s").get<double>() * 1000.0);
  if (s.duration_ms <= 0) throw validation_error("duration_s must be > 0");

  for (const auto& lj : j.at("lanes"))
    s.lanes.emplace_back(lj.at("id").get<int>(),
                         detail::parse_points(lj.at("points"), "lane point"));
  if (s.lanes.empty()) throw validation_error("scenario needs at least one lane");
  s.target_lane_id = j.at("target_lane_id").get<int>();
  s.merge_lane_id = j.at("merge_lane_id").get<int>();
  s.lane(s.target_lane_id);
  s.lane(s.merge_lane_id);

  if (j.contains("camera")) {
    const auto& cj = j.at("camera");
    if (cj.contains("polygon"))
      s.camera.polygon = detail::parse_points(cj.at("polygon"), "camera polygon");
    if (!s.camera.polygon.empty() && s.camera.polygon.size() < 3)
      throw validation_error("camera polygon needs at least 3 points");
    s.camera.noise_sigma_m = cj.value("noise_sigma_m", 0.25);
    if (s.camera.noise_sigma_m < 0)
      throw validation_error("camera noise sigma must be >= 0");
  }

  if (j.contains("impairment")) {
    const auto& ij = j.at("impairment");
    s.impairment.latency_ms = ij.value("latency_ms", 0.0);
    s.impairment.jitter_ms = ij.value("jitter_ms", 0.0);
    s.impairment.loss = ij.value("loss", 0.0);
    if (s.impairment.latency_ms < 0 || s.impairment.jitter_ms < 0)
      throw validation_error("impairment latency and jitter must be >= 0");
    if (s.impairment.loss < 0 || s.impairment.loss > 1)
      throw validation_error("impairment loss must be in [0, 1]");
  }

  for (const auto& vj : j.at("vehicles")) {
    VehicleSpec v;
    v.id = vj.at("id").get<std::string>();
    if (v.id.empty()) throw validation_error("vehicle id must be nonempty");
    v.lane_id = vj.at("lane_id").get<int>();
    s.lane(v.lane_id);
    v.position = detail::parse_point(vj.at("position"), "vehicle position");
    v.speed_mps = vj.at("speed_mps").get<double>();
    if (v.speed_mps < 0) throw validation_error("vehicle speed must be >= 0");
    const auto& lane = s.lane(v.lane_id);
    v.heading_deg = vj.contains("heading_deg")
                        ? wrap_heading(vj.at("heading_deg").get<double>())
                        : lane.heading_deg_at(lane.project(v.position).s);
    v.length_m = vj.value("length_m", 4.5);
    v.width_m = vj.value("width_m", 1.8);
    if (v.length_m <= 0 || v.width_m <= 0)
      throw validation_error("vehicle dimensions must be > 0");
    v.connected = vj.value("connected", true);
    v.behavior = behavior_from_string(vj.at("behavior").get<std::string>());
    v.desired_speed_mps = vj.value("desired_speed_mps", v.speed_mps);
    if (vj.contains("script")) {
      for (const auto& sj : vj.at("script")) {
        ScriptSegment seg;
        seg.t_ms = sj.at("t_ms").get<std::int64_t>();
        seg.accel_mps2 = sj.value("accel_mps2", 0.0);
        seg.heading_deg = wrap_heading(sj.value("heading_deg", v.heading_deg));
        v.script.push_back(seg);
      }
      for (std::size_t i = 1; i < v.script.size(); ++i)
        if (v.script[i].t_ms <= v.script[i - 1].t_ms)
          throw validation_error("script segments must have increasing t_ms");
    }
    if (v.behavior == Behavior::agent_recommended && !v.connected)
      throw validation_error("agent-recommended vehicle must be connected: " + v.id);
    for (const auto& other : s.vehicles)
      if (other.id == v.id)
        throw validation_error("duplicate vehicle id: " + v.id);
    s.vehicles.push_back(std::move(v));
  }
  if (s.vehicles.empty()) throw validation_error("scenario needs vehicles");

  bool has_merging = false;
  for (const auto& v : s.vehicles)
    if (v.lane_id == s.merge_lane_id) has_merging = true;
  if (!has_merging)
    throw validation_error("scenario needs at least one merging vehicle");
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scenario file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw format_error("scenario file is not valid JSON");
  return scenario_from_json(j);
}

inline VehicleState initial_state(const VehicleSpec& v) {
  VehicleState st;
  st.vehicle_id = v.id;
  st.timestamp_ms = 0;
  st.position = v.position;
  st.speed_mps = v.speed_mps;
  st.heading_deg = v.heading_deg;
  st.lane_id = v.lane_id;
  st.length_m = v.length_m;
  st.width_m = v.width_m;
  st.connected = v.connected;
  st.source = StateSource::onboard;
  return st;
}

}  // namespace lmo::sim
