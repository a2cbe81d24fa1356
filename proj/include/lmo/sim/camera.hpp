#pragma once

#include <cstdint>
#include <vector>

#include "lmo/geo.hpp"
#include "lmo/rng.hpp"
#include "lmo/sim/scenario.hpp"

namespace lmo::sim {

// Even-odd ray casting; points exactly on an edge may land either side,
// which is fine for a coverage polygon.
inline bool polygon_contains(const std::vector<Vec2>& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

// One anonymous detection: position carries the noise, kinematics are the
// camera's point estimates.
struct CameraReport {
  std::int64_t timestamp_ms{0};
  Vec2 position;
  double speed_mps{0.0};
  double heading_deg{0.0};
  double length_m{4.5};
  double width_m{1.8};
};

// Reports every vehicle inside the coverage polygon, connected or not, with
// zero-mean Gaussian position noise and the camera's own timestamp. Noise
// draws follow the roster order of the visible vehicles.
inline std::vector<CameraReport> camera_frame(const CameraSpec& camera,
                                              const std::vector<VehicleState>& truth,
                                              std::int64_t timestamp_ms,
                                              Rng& noise_rng) {
  std::vector<CameraReport> out;
  if (camera.polygon.empty()) return out;
  for (const auto& v : truth) {
    if (!polygon_contains(camera.polygon, v.position)) continue;
    CameraReport r;
    r.timestamp_ms = timestamp_ms;
    r.position = v.position;
    if (camera.noise_sigma_m > 0) {
      r.position.x += noise_rng.gaussian(0.0, camera.noise_sigma_m);
      r.position.y += noise_rng.gaussian(0.0, camera.noise_sigma_m);
    }
    r.speed_mps = v.speed_mps;
    r.heading_deg = v.heading_deg;
    r.length_m = v.length_m;
    r.width_m = v.width_m;
    out.push_back(r);
  }
  return out;
}

}  // namespace lmo::sim
