#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "lmo/geo.hpp"
#include "lmo/sim/camera.hpp"

namespace lmo::sim {

struct FusedTrack {
  VehicleState state;
  std::vector<std::string> constituents;  // "obu:<id>" and/or "camera"
};

struct FusionOutput {
  std::vector<FusedTrack> tracks;
  std::vector<std::string> ambiguities;
};

// Deduplicates camera detections against onboard reports: a camera report
// joins an onboard report when they are closer than the association radius
// and time-aligned within the window; the fused state keeps the onboard
// kinematics. Camera reports left over become unconnected tracks whose
// synthetic ids persist across ticks by nearest-neighbor continuity.
class DataFusion {
 public:
  explicit DataFusion(double assoc_dist_m = 2.0, std::int64_t assoc_dt_ms = 100,
                      double continuity_m = 5.0,
                      std::int64_t track_expiry_ms = 1000)
      : assoc_dist_m_(assoc_dist_m),
        assoc_dt_ms_(assoc_dt_ms),
        continuity_m_(continuity_m),
        track_expiry_ms_(track_expiry_ms) {}

  FusionOutput fuse(const std::vector<VehicleState>& onboard,
                    const std::vector<CameraReport>& camera) {
    FusionOutput out;

    struct Pair {
      double dist;
      std::size_t cam;
      std::size_t obu;
    };
    std::vector<Pair> feasible;
    std::vector<int> cam_options(camera.size(), 0);
    std::vector<int> obu_options(onboard.size(), 0);
    for (std::size_t c = 0; c < camera.size(); ++c) {
      for (std::size_t o = 0; o < onboard.size(); ++o) {
        const double d = (camera[c].position - onboard[o].position).norm();
        const std::int64_t dt =
            std::llabs(camera[c].timestamp_ms - onboard[o].timestamp_ms);
        if (d < assoc_dist_m_ && dt < assoc_dt_ms_) {
          feasible.push_back({d, c, o});
          ++cam_options[c];
          ++obu_options[o];
        }
      }
    }
    std::sort(feasible.begin(), feasible.end(), [](const Pair& a, const Pair& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.cam != b.cam) return a.cam < b.cam;
      return a.obu < b.obu;
    });

    std::vector<bool> cam_claimed(camera.size(), false);
    std::vector<int> obu_camera(onboard.size(), -1);
    for (const auto& pr : feasible) {
      if (cam_claimed[pr.cam] || obu_camera[pr.obu] >= 0) continue;
      cam_claimed[pr.cam] = true;
      obu_camera[pr.obu] = static_cast<int>(pr.cam);
      if (cam_options[pr.cam] > 1 || obu_options[pr.obu] > 1)
        out.ambiguities.push_back("multiple association candidates near " +
                                  onboard[pr.obu].vehicle_id +
                                  "; chose nearest");
    }

    for (std::size_t o = 0; o < onboard.size(); ++o) {
      FusedTrack t;
      t.state = onboard[o];
      t.constituents.push_back("obu:" + onboard[o].vehicle_id);
      if (obu_camera[o] >= 0) {
        t.state.source = StateSource::fused;
        t.constituents.push_back("camera");
      }
      out.tracks.push_back(std::move(t));
    }

    std::int64_t now = 0;
    for (const auto& r : camera) now = std::max(now, r.timestamp_ms);
    for (const auto& s : onboard) now = std::max(now, s.timestamp_ms);

    std::vector<bool> track_claimed(tracks_.size(), false);
    for (std::size_t c = 0; c < camera.size(); ++c) {
      if (cam_claimed[c]) continue;
      int best = -1;
      double best_d = continuity_m_;
      for (std::size_t k = 0; k < tracks_.size(); ++k) {
        if (track_claimed[k]) continue;
        const double d = (camera[c].position - tracks_[k].position).norm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      std::string id;
      if (best >= 0) {
        track_claimed[best] = true;
        id = tracks_[best].id;
        tracks_[best].position = camera[c].position;
        tracks_[best].last_ms = camera[c].timestamp_ms;
      } else {
        id = "trk-" + std::to_string(++next_track_);
        tracks_.push_back({id, camera[c].position, camera[c].timestamp_ms});
        track_claimed.push_back(true);
      }

      FusedTrack t;
      t.state.vehicle_id = id;
      t.state.timestamp_ms = camera[c].timestamp_ms;
      t.state.position = camera[c].position;
      t.state.speed_mps = camera[c].speed_mps;
      t.state.heading_deg = camera[c].heading_deg;
      t.state.length_m = camera[c].length_m;
      t.state.width_m = camera[c].width_m;
      t.state.connected = false;
      t.state.source = StateSource::camera;
      t.constituents.push_back("camera");
      out.tracks.push_back(std::move(t));
    }

    std::erase_if(tracks_, [&](const Track& t) {
      return now - t.last_ms > track_expiry_ms_;
    });
    return out;
  }

 private:
  struct Track {
    std::string id;
    Vec2 position;
    std::int64_t last_ms{0};
  };

  double assoc_dist_m_;
  std::int64_t assoc_dt_ms_;
  double continuity_m_;
  std::int64_t track_expiry_ms_;
  std::vector<Track> tracks_;
  std::uint64_t next_track_{0};
};

}  // namespace lmo::sim
