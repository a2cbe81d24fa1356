#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"
#include "lmo/geo.hpp"
#include "lmo/rl/env.hpp"
#include "lmo/wire.hpp"

namespace lmo::orch {

using json = nlohmann::json;

// Site geometry the orchestrator serves: the subscription boundary, the
// local projection origin, which lane ids mean "target" and "merge", and
// the straight target-lane centerline.
struct LaneConfig {
  wire::Boundary boundary;
  GeoOrigin origin;
  int target_lane_id{1};
  int merge_lane_id{2};
  rl::LaneFrame frame{{0.0, 0.0}, {0.0, 1.0}};
};

inline LaneConfig lane_config_from_json(const json& j) {
  LaneConfig c;
  const auto& b = j.at("boundary");
  c.boundary.min_lat = b.at("min_lat").get<double>();
  c.boundary.min_lon = b.at("min_lon").get<double>();
  c.boundary.max_lat = b.at("max_lat").get<double>();
  c.boundary.max_lon = b.at("max_lon").get<double>();
  if (c.boundary.min_lat > c.boundary.max_lat ||
      c.boundary.min_lon > c.boundary.max_lon)
    throw format_error("boundary min exceeds max");
  c.origin.lat = j.at("origin").at("lat").get<double>();
  c.origin.lon = j.at("origin").at("lon").get<double>();
  c.target_lane_id = j.at("target_lane_id").get<int>();
  c.merge_lane_id = j.at("merge_lane_id").get<int>();
  const auto& line = j.at("centerline");
  const double lat = line.at("point").at("lat").get<double>();
  const double lon = line.at("point").at("lon").get<double>();
  c.frame.centerline_point = project_coordinates(lat, lon, c.origin);
  c.frame.axis = heading_to_unit(line.at("heading_deg").get<double>());
  return c;
}

inline LaneConfig load_lane_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open boundary file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw format_error("boundary file is not valid JSON");
  return lane_config_from_json(j);
}

// A complete merge scene: the merging vehicle plus its preceding and
// following neighbours on the target lane.
struct MergeScene {
  VehicleState m;
  VehicleState p;
  VehicleState f;
};

// Finds P (nearest target-lane vehicle ahead of M) and F (nearest behind),
// considering only vehicles inside the boundary. Returns nothing unless
// both neighbours exist.
inline std::optional<MergeScene> detect_scene(
    const std::vector<VehicleState>& states, const LaneConfig& config,
    const std::string& merging_uuid) {
  const VehicleState* m = nullptr;
  for (const auto& s : states)
    if (s.vehicle_id == merging_uuid) m = &s;
  if (m == nullptr || m->lane_id != config.merge_lane_id) return std::nullopt;
  if (!config.boundary.contains(m->lat, m->lon)) return std::nullopt;

  const double s_m = config.frame.longitudinal(m->position);
  const VehicleState* p = nullptr;
  const VehicleState* f = nullptr;
  double best_ahead = 0.0, best_behind = 0.0;
  for (const auto& s : states) {
    if (s.lane_id != config.target_lane_id) continue;
    if (!config.boundary.contains(s.lat, s.lon)) continue;
    const double offset = config.frame.longitudinal(s.position) - s_m;
    if (offset > 0.0) {
      if (p == nullptr || offset < best_ahead) {
        p = &s;
        best_ahead = offset;
      }
    } else {
      if (f == nullptr || offset > best_behind) {
        f = &s;
        best_behind = offset;
      }
    }
  }
  if (p == nullptr || f == nullptr) return std::nullopt;
  return MergeScene{*m, *p, *f};
}

// Merging vehicles whose scene involves the updated vehicle; these are the
// targets a stored update should trigger a recommendation for.
inline std::vector<std::string> affected_targets(
    const std::vector<VehicleState>& states, const LaneConfig& config,
    const std::string& updated_uuid) {
  std::vector<std::string> targets;
  for (const auto& s : states) {
    if (s.lane_id != config.merge_lane_id) continue;
    const auto scene = detect_scene(states, config, s.vehicle_id);
    if (!scene) continue;
    if (scene->m.vehicle_id == updated_uuid ||
        scene->p.vehicle_id == updated_uuid ||
        scene->f.vehicle_id == updated_uuid)
      targets.push_back(s.vehicle_id);
  }
  return targets;
}

}  // namespace lmo::orch
