#pragma once

// Trajectory ingest and labeling: CSV -> merge instances -> labeled samples.
//
// A merge instance is a 70-frame window (40 frames before the lane change,
// 30 from it onward) around one detected lane change, with the merging
// vehicle M and its target-lane neighbours P (ahead) and F (behind) fixed
// at the change frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/csv.hpp"
#include "lmo/error.hpp"
#include "lmo/geo.hpp"
#include "lmo/rng.hpp"

namespace lmo::dataset {

using json = nlohmann::json;

inline constexpr int kFramesBefore = 40;
inline constexpr int kFramesAfter = 30;
inline constexpr int kInstanceFrames = kFramesBefore + kFramesAfter;  // 70

inline constexpr double kAccelClipMps2 = 4.5;
inline constexpr double kAccelBinWidth = 0.5;
inline constexpr int kAccelClasses = 19;

inline constexpr double kHeadingClipDeg = 30.0;
inline constexpr double kHeadingBinWidth = 5.0;
inline constexpr int kHeadingClasses = 13;

inline constexpr int kFeatureDim = 17;
inline constexpr double kTimeToMergeCapS = 60.0;

inline int accel_class_of(double accel_mps2) {
  const double a = std::clamp(accel_mps2, -kAccelClipMps2, kAccelClipMps2);
  const int c = static_cast<int>(std::floor((a + kAccelClipMps2) / kAccelBinWidth));
  return std::clamp(c, 0, kAccelClasses - 1);
}

inline int heading_class_of(double rel_heading_deg) {
  const double h = std::clamp(rel_heading_deg, -kHeadingClipDeg, kHeadingClipDeg);
  const int c = static_cast<int>(std::floor((h + kHeadingClipDeg) / kHeadingBinWidth));
  return std::clamp(c, 0, kHeadingClasses - 1);
}

// ---------------------------------------------------------------------------
// CSV ingest

struct ColumnMapping {
  std::string vehicle_id = "Vehicle_ID";
  std::string frame_id = "Frame_ID";
  std::string local_x = "Local_X";
  std::string local_y = "Local_Y";
  std::string speed = "v_Vel";
  std::string accel = "v_Acc";
  std::string length = "v_Length";
  std::string width = "v_Width";
  std::string lane_id = "Lane_ID";
  std::string heading;  // optional; derived from motion when empty
  double position_scale = 1.0;  // 0.3048 maps NGSIM feet to meters
  double speed_scale = 1.0;
  double accel_scale = 1.0;
  double size_scale = 1.0;
  std::int64_t frame_period_ms = 100;
};

inline ColumnMapping load_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open mapping config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw format_error("mapping config is not valid JSON: " + std::string(e.what()));
  }
  ColumnMapping m;
  auto str = [&](const char* key, std::string& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
  };
  str("vehicle_id", m.vehicle_id);
  str("frame_id", m.frame_id);
  str("local_x", m.local_x);
  str("local_y", m.local_y);
  str("speed", m.speed);
  str("accel", m.accel);
  str("length", m.length);
  str("width", m.width);
  str("lane_id", m.lane_id);
  str("heading", m.heading);
  num("position_scale", m.position_scale);
  num("speed_scale", m.speed_scale);
  num("accel_scale", m.accel_scale);
  num("size_scale", m.size_scale);
  if (j.contains("frame_period_ms"))
    m.frame_period_ms = j.at("frame_period_ms").get<std::int64_t>();
  return m;
}

struct TrajectoryFrame {
  VehicleState state;
  std::int64_t frame_index{0};  // global frame id from the source
};

struct ParseResult {
  std::vector<TrajectoryFrame> frames;  // sorted by (vehicle_id, timestamp)
  std::size_t skipped_rows{0};
};

// Streams the CSV once; malformed rows are counted and skipped. Headings
// are derived from per-vehicle displacement when no heading column maps.
inline ParseResult parse_trajectory_csv(const std::string& path,
                                        const ColumnMapping& map = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open trajectory csv: " + path);

  std::string header;
  if (!std::getline(in, header)) throw format_error("empty file, no header row");
  const auto columns = csv::split_fields(header);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < columns.size(); ++i)
    index.emplace(std::string(csv::trim(columns[i])), i);

  auto col = [&](const std::string& name) -> std::size_t {
    const auto it = index.find(name);
    if (it == index.end())
      throw format_error("missing required column: " + name);
    return it->second;
  };

  const std::size_t c_vid = col(map.vehicle_id), c_fid = col(map.frame_id);
  const std::size_t c_x = col(map.local_x), c_y = col(map.local_y);
  const std::size_t c_v = col(map.speed), c_a = col(map.accel);
  const std::size_t c_len = col(map.length), c_w = col(map.width);
  const std::size_t c_lane = col(map.lane_id);
  const std::optional<std::size_t> c_heading =
      map.heading.empty() ? std::nullopt : std::optional(col(map.heading));

  const std::size_t needed = std::max(
      {c_vid, c_fid, c_x, c_y, c_v, c_a, c_len, c_w, c_lane, c_heading.value_or(0)});

  ParseResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split_fields(line);
    if (fields.size() <= needed) {
      ++result.skipped_rows;
      continue;
    }
    const auto fid = csv::parse_int(fields[c_fid]);
    const auto x = csv::parse_double(fields[c_x]);
    const auto y = csv::parse_double(fields[c_y]);
    const auto v = csv::parse_double(fields[c_v]);
    const auto a = csv::parse_double(fields[c_a]);
    const auto len = csv::parse_double(fields[c_len]);
    const auto w = csv::parse_double(fields[c_w]);
    const auto lane = csv::parse_int(fields[c_lane]);
    const std::string vid{csv::trim(fields[c_vid])};
    std::optional<double> heading;
    if (c_heading) {
      heading = csv::parse_double(fields[*c_heading]);
      if (!heading) {
        ++result.skipped_rows;
        continue;
      }
    }
    if (vid.empty() || !fid || !x || !y || !v || !a || !len || !w || !lane ||
        *fid < 0 || *v * map.speed_scale < 0 || *len <= 0 || *w <= 0) {
      ++result.skipped_rows;
      continue;
    }
    TrajectoryFrame f;
    f.frame_index = *fid;
    f.state.vehicle_id = vid;
    f.state.timestamp_ms = *fid * map.frame_period_ms;
    f.state.position = {*x * map.position_scale, *y * map.position_scale};
    f.state.speed_mps = *v * map.speed_scale;
    f.state.accel_mps2 = *a * map.accel_scale;
    f.state.heading_deg = heading ? wrap_heading(*heading) : 0.0;
    f.state.lane_id = static_cast<int>(*lane);
    f.state.length_m = *len * map.size_scale;
    f.state.width_m = *w * map.size_scale;
    f.state.source = StateSource::onboard;
    result.frames.push_back(std::move(f));
  }

  std::sort(result.frames.begin(), result.frames.end(),
            [](const TrajectoryFrame& a, const TrajectoryFrame& b) {
              if (a.state.vehicle_id != b.state.vehicle_id)
                return a.state.vehicle_id < b.state.vehicle_id;
              return a.state.timestamp_ms < b.state.timestamp_ms;
            });

  if (!c_heading) {
    // motion-derived heading; reuse the previous value when stationary
    for (std::size_t i = 0; i < result.frames.size(); ++i) {
      auto& cur = result.frames[i];
      if (i + 1 < result.frames.size() &&
          result.frames[i + 1].state.vehicle_id == cur.state.vehicle_id) {
        const Vec2 d = result.frames[i + 1].state.position - cur.state.position;
        if (d.norm() > 0.01) {
          cur.state.heading_deg = unit_to_heading(d);
          continue;
        }
      }
      if (i > 0 && result.frames[i - 1].state.vehicle_id == cur.state.vehicle_id)
        cur.state.heading_deg = result.frames[i - 1].state.heading_deg;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Merge detection and instance extraction

struct MergeEvent {
  std::string vehicle_id;
  std::int64_t merge_timestamp_ms{0};
  int from_lane{0};
  int to_lane{0};
};

// frames must belong to one vehicle, time-sorted
inline std::vector<MergeEvent> detect_lane_merges(
    const std::vector<TrajectoryFrame>& frames) {
  std::vector<MergeEvent> events;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].state.lane_id != frames[i - 1].state.lane_id) {
      events.push_back({frames[i].state.vehicle_id, frames[i].state.timestamp_ms,
                        frames[i - 1].state.lane_id, frames[i].state.lane_id});
    }
  }
  return events;
}

enum class RejectReason { truncated_window, no_preceding, no_following };

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::truncated_window: return "truncated_window";
    case RejectReason::no_preceding: return "no_preceding";
    default: return "no_following";
  }
}

struct FrameStates {
  VehicleState m, p, f;
};

struct MergeInstance {
  std::string instance_id;
  MergeTriple triple;
  std::vector<FrameStates> frames;  // exactly 70
  Vec2 lane_axis;        // unit direction of travel on the target lane
  Vec2 centerline_point; // a point on the target-lane centerline
  double merge_s{0.0};   // merge point arc position along the axis

  double longitudinal(Vec2 pos) const { return (pos - centerline_point).dot(lane_axis); }
  double lateral(Vec2 pos) const {
    return (pos - centerline_point).dot(lane_axis.right_normal());
  }
};

// Frames of all vehicles indexed for neighbour lookup.
class FrameIndex {
 public:
  explicit FrameIndex(const std::vector<TrajectoryFrame>& frames) {
    for (const auto& f : frames) by_vehicle_[f.state.vehicle_id].push_back(f);
    for (auto& [id, vec] : by_vehicle_)
      for (auto& f : vec) at_time_[f.state.timestamp_ms].push_back(&f);
  }

  const std::vector<TrajectoryFrame>* vehicle(const std::string& id) const {
    const auto it = by_vehicle_.find(id);
    return it == by_vehicle_.end() ? nullptr : &it->second;
  }

  const std::vector<const TrajectoryFrame*>* at(std::int64_t ts) const {
    const auto it = at_time_.find(ts);
    return it == at_time_.end() ? nullptr : &it->second;
  }

  const VehicleState* state_of(const std::string& id, std::int64_t ts) const {
    const auto* vec = vehicle(id);
    if (!vec) return nullptr;
    const auto it = std::lower_bound(
        vec->begin(), vec->end(), ts,
        [](const TrajectoryFrame& f, std::int64_t t) { return f.state.timestamp_ms < t; });
    if (it == vec->end() || it->state.timestamp_ms != ts) return nullptr;
    return &it->state;
  }

  const std::map<std::string, std::vector<TrajectoryFrame>>& vehicles() const {
    return by_vehicle_;
  }

 private:
  std::map<std::string, std::vector<TrajectoryFrame>> by_vehicle_;
  std::unordered_map<std::int64_t, std::vector<const TrajectoryFrame*>> at_time_;
};

struct ExtractionOutcome {
  std::optional<MergeInstance> instance;
  std::optional<RejectReason> reject;
};

namespace detail {

// Direction of travel estimated from a track's net displacement.
inline std::optional<Vec2> track_direction(const std::vector<const VehicleState*>& track) {
  const Vec2 d = track.back()->position - track.front()->position;
  if (d.norm() < 0.5) return std::nullopt;
  return d.unit();
}

}  // namespace detail

inline ExtractionOutcome extract_merge_instance(const MergeEvent& event,
                                                const FrameIndex& index,
                                                std::int64_t frame_period_ms = kTickMs) {
  ExtractionOutcome out;
  const auto* track = index.vehicle(event.vehicle_id);
  if (!track) {
    out.reject = RejectReason::truncated_window;
    return out;
  }

  const std::int64_t t0 = event.merge_timestamp_ms - kFramesBefore * frame_period_ms;
  std::vector<const VehicleState*> m_states(kInstanceFrames, nullptr);
  for (int k = 0; k < kInstanceFrames; ++k) {
    m_states[k] = index.state_of(event.vehicle_id, t0 + k * frame_period_ms);
    if (!m_states[k]) {
      out.reject = RejectReason::truncated_window;
      return out;
    }
  }

  // the change frame: first frame on the target lane
  const VehicleState& m_change = *m_states[kFramesBefore];
  if (m_change.lane_id != event.to_lane) {
    out.reject = RejectReason::truncated_window;
    return out;
  }

  // provisional axis from M's own motion around the change
  Vec2 axis = heading_to_unit(m_change.heading_deg);
  {
    const Vec2 d = m_states[kInstanceFrames - 1]->position - m_states[0]->position;
    if (d.norm() > 0.5) axis = d.unit();
  }

  // nearest target-lane vehicles ahead/behind of M at the change frame;
  // ties broken by lower vehicle_id
  const auto* peers = index.at(event.merge_timestamp_ms);
  const double s_m = m_change.position.dot(axis);
  const VehicleState* best_p = nullptr;
  const VehicleState* best_f = nullptr;
  double best_p_d = std::numeric_limits<double>::infinity();
  double best_f_d = std::numeric_limits<double>::infinity();
  if (peers) {
    for (const TrajectoryFrame* tf : *peers) {
      const VehicleState& s = tf->state;
      if (s.vehicle_id == event.vehicle_id || s.lane_id != event.to_lane) continue;
      const double ds = s.position.dot(axis) - s_m;
      if (ds > 0) {
        if (ds < best_p_d || (ds == best_p_d && best_p && s.vehicle_id < best_p->vehicle_id)) {
          best_p_d = ds;
          best_p = &s;
        }
      } else if (ds < 0) {
        if (-ds < best_f_d || (-ds == best_f_d && best_f && s.vehicle_id < best_f->vehicle_id)) {
          best_f_d = -ds;
          best_f = &s;
        }
      }
    }
  }
  if (!best_p) {
    out.reject = RejectReason::no_preceding;
    return out;
  }
  if (!best_f) {
    out.reject = RejectReason::no_following;
    return out;
  }

  // P and F must exist at every window frame
  std::vector<const VehicleState*> p_states(kInstanceFrames, nullptr);
  std::vector<const VehicleState*> f_states(kInstanceFrames, nullptr);
  for (int k = 0; k < kInstanceFrames; ++k) {
    const std::int64_t ts = t0 + k * frame_period_ms;
    p_states[k] = index.state_of(best_p->vehicle_id, ts);
    f_states[k] = index.state_of(best_f->vehicle_id, ts);
    if (!p_states[k]) {
      out.reject = RejectReason::no_preceding;
      return out;
    }
    if (!f_states[k]) {
      out.reject = RejectReason::no_following;
      return out;
    }
  }

  MergeInstance inst;
  inst.instance_id = event.vehicle_id + "@" + std::to_string(event.merge_timestamp_ms);
  // centerline approximated by P's track through its change-frame position
  if (const auto dir = detail::track_direction(p_states)) inst.lane_axis = *dir;
  else inst.lane_axis = axis;
  inst.centerline_point = p_states[kFramesBefore]->position;
  inst.triple.merging = event.vehicle_id;
  inst.triple.preceding = best_p->vehicle_id;
  inst.triple.following = best_f->vehicle_id;
  inst.triple.target_lane = event.to_lane;
  inst.triple.merge_point = m_change.position;
  inst.triple.merge_frame_index = kFramesBefore;
  inst.merge_s = inst.longitudinal(m_change.position);
  inst.frames.reserve(kInstanceFrames);
  for (int k = 0; k < kInstanceFrames; ++k)
    inst.frames.push_back({*m_states[k], *p_states[k], *f_states[k]});
  out.instance = std::move(inst);
  return out;
}

// ---------------------------------------------------------------------------
// Labeling

// False when M trails F along the lane axis; otherwise the safety predicate
// with M's position projected onto the target-lane centerline.
inline bool label_feasibility(const MergeInstance& inst, int frame_index,
                              const SafetyParams& params = {}) {
  const FrameStates& fs = inst.frames.at(frame_index);
  const double s_m = inst.longitudinal(fs.m.position);
  const double s_f = inst.longitudinal(fs.f.position);
  const double s_p = inst.longitudinal(fs.p.position);
  if (s_m <= s_f) return false;
  if (s_m >= s_p) return false;
  VehicleState m_on_lane = fs.m;
  m_on_lane.position = inst.centerline_point + inst.lane_axis * s_m;
  return is_safe_slot(m_on_lane, fs.p, fs.f, inst.lane_axis, params);
}

inline std::vector<bool> feasibility_labels(const MergeInstance& inst,
                                            const SafetyParams& params = {}) {
  std::vector<bool> labels(inst.frames.size());
  for (std::size_t i = 0; i < inst.frames.size(); ++i)
    labels[i] = label_feasibility(inst, static_cast<int>(i), params);
  return labels;
}

// first frame at or after `from` labeled true; merge frame when none is
inline int first_true_at_or_after(const std::vector<bool>& labels, int from,
                                  int merge_frame) {
  for (int k = from; k < static_cast<int>(labels.size()); ++k)
    if (labels[k]) return k;
  return merge_frame;
}

// Recommended acceleration target for one frame, before binning.
//   rule 1 (infeasible frame): mean-speed change to the first feasible frame
//   rule 2 (feasible, before the merge): mean recorded acceleration to merge
//   rule 3 (at/after the merge): mean recorded acceleration since the merge
inline double derive_target_acceleration_raw(const MergeInstance& inst,
                                             int frame_index,
                                             const std::vector<bool>& labels,
                                             std::int64_t frame_period_ms = kTickMs) {
  const int tm = inst.triple.merge_frame_index;
  auto mean_accel = [&](int lo, int hi) {  // inclusive
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += inst.frames[k].m.accel_mps2;
    return sum / (hi - lo + 1);
  };

  if (frame_index >= tm) return mean_accel(tm, frame_index);  // rule 3
  if (labels[frame_index]) return mean_accel(frame_index, tm);  // rule 2

  // rule 1: target acceleration that moves current speed to the mean speed
  // over [frame, t*]; t* > frame because labels[frame] is false here
  const int t_star = first_true_at_or_after(labels, frame_index, tm);
  double v_sum = 0.0;
  for (int k = frame_index; k <= t_star; ++k) v_sum += inst.frames[k].m.speed_mps;
  const double v_bar = v_sum / (t_star - frame_index + 1);
  const double dt_s = (t_star - frame_index) * frame_period_ms / 1000.0;
  return (v_bar - inst.frames[frame_index].m.speed_mps) / dt_s;
}

inline int derive_target_acceleration(const MergeInstance& inst, int frame_index,
                                      const std::vector<bool>& labels) {
  return accel_class_of(derive_target_acceleration_raw(inst, frame_index, labels));
}

// Heading target relative to the lane direction: towards the merge point for
// feasible frames, towards M's position at the first feasible frame otherwise.
inline double derive_target_heading_raw(const MergeInstance& inst, int frame_index,
                                        const std::vector<bool>& labels) {
  const FrameStates& fs = inst.frames.at(frame_index);
  Vec2 target;
  if (labels[frame_index]) {
    target = inst.triple.merge_point;
  } else {
    const int t_star =
        first_true_at_or_after(labels, frame_index, inst.triple.merge_frame_index);
    target = inst.frames[t_star].m.position;
  }
  const Vec2 disp = target - fs.m.position;
  if (disp.norm() < 1e-9) return 0.0;
  return relative_bearing_deg(inst.lane_axis, disp);
}

inline int derive_target_heading(const MergeInstance& inst, int frame_index,
                                 const std::vector<bool>& labels) {
  return heading_class_of(derive_target_heading_raw(inst, frame_index, labels));
}

// 17 features, fixed order:
//   [0..3]   M: longitudinal position relative to the merge point, lateral
//            offset from the target centerline, speed, acceleration
//   [4..7]   P: same four
//   [8..11]  F: same four
//   [12]     bumper gap P ahead of M
//   [13]     bumper gap M ahead of F
//   [14]     relative speed P - M
//   [15]     relative speed M - F
//   [16]     time to merge point at current speed, capped
inline std::array<double, kFeatureDim> build_feature_vector(const MergeInstance& inst,
                                                            int frame_index) {
  const FrameStates& fs = inst.frames.at(frame_index);
  std::array<double, kFeatureDim> x{};
  int i = 0;
  for (const VehicleState* v : {&fs.m, &fs.p, &fs.f}) {
    x[i++] = inst.longitudinal(v->position) - inst.merge_s;
    x[i++] = inst.lateral(v->position);
    x[i++] = v->speed_mps;
    x[i++] = v->accel_mps2;
  }
  x[12] = longitudinal_gap(fs.m, fs.p, inst.lane_axis);
  x[13] = longitudinal_gap(fs.f, fs.m, inst.lane_axis);
  x[14] = fs.p.speed_mps - fs.m.speed_mps;
  x[15] = fs.m.speed_mps - fs.f.speed_mps;
  const double dist = inst.merge_s - inst.longitudinal(fs.m.position);
  x[16] = dist <= 0 ? 0.0
                    : std::min(dist / std::max(fs.m.speed_mps, 0.1), kTimeToMergeCapS);
  return x;
}

struct LabeledSample {
  std::string instance_id;
  int frame_index{0};
  std::array<double, kFeatureDim> features{};
  bool merge_feasible{false};
  int accel_class{0};
  int heading_class{0};
};

inline std::vector<LabeledSample> label_instance(const MergeInstance& inst,
                                                 const SafetyParams& params = {}) {
  const auto labels = feasibility_labels(inst, params);
  std::vector<LabeledSample> samples;
  samples.reserve(inst.frames.size());
  for (int k = 0; k < static_cast<int>(inst.frames.size()); ++k) {
    LabeledSample s;
    s.instance_id = inst.instance_id;
    s.frame_index = k;
    s.features = build_feature_vector(inst, k);
    s.merge_feasible = labels[k];
    s.accel_class = derive_target_acceleration(inst, k, labels);
    s.heading_class = derive_target_heading(inst, k, labels);
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Dataset split

struct Split {
  std::vector<LabeledSample> train, test, validation;
};

// Instance-atomic 70/20/10 split, deterministic in the seed.
inline Split split_dataset(const std::vector<LabeledSample>& samples,
                           std::uint64_t seed) {
  if (samples.empty()) throw validation_error("cannot split an empty sample set");
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& s : samples) {
    if (seen.emplace(s.instance_id, ids.size()).second) ids.push_back(s.instance_id);
  }
  if (ids.size() < 10)
    throw validation_error("need at least 10 instances to split, have " +
                           std::to_string(ids.size()));

  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);

  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(std::llround(0.7 * n));
  const std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * n));

  std::unordered_map<std::string, int> bucket;  // 0 train, 1 test, 2 validation
  for (std::size_t i = 0; i < n; ++i)
    bucket[ids[i]] = i < n_train ? 0 : (i < n_train + n_test ? 1 : 2);

  Split split;
  for (const auto& s : samples) {
    switch (bucket.at(s.instance_id)) {
      case 0: split.train.push_back(s); break;
      case 1: split.test.push_back(s); break;
      default: split.validation.push_back(s); break;
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Pipeline driver and NDJSON output

struct PipelineReport {
  std::size_t rows_skipped{0};
  std::size_t events_detected{0};
  std::size_t instances_retained{0};
  std::map<std::string, std::size_t> rejections;
  double merge_frame_true_fraction{0.0};  // flagged below 0.95
};

struct PipelineResult {
  std::vector<MergeInstance> instances;  // ordered by (vehicle_id, timestamp)
  std::vector<LabeledSample> samples;
  PipelineReport report;
};

inline PipelineResult run_pipeline(const std::vector<TrajectoryFrame>& frames,
                                   std::size_t rows_skipped,
                                   const SafetyParams& params = {},
                                   std::int64_t frame_period_ms = kTickMs) {
  PipelineResult out;
  out.report.rows_skipped = rows_skipped;
  const FrameIndex index(frames);

  std::vector<MergeEvent> events;
  for (const auto& [id, track] : index.vehicles()) {
    const auto evs = detect_lane_merges(track);
    events.insert(events.end(), evs.begin(), evs.end());
  }
  std::sort(events.begin(), events.end(), [](const MergeEvent& a, const MergeEvent& b) {
    if (a.vehicle_id != b.vehicle_id) return a.vehicle_id < b.vehicle_id;
    return a.merge_timestamp_ms < b.merge_timestamp_ms;
  });
  out.report.events_detected = events.size();

  std::size_t merge_frame_true = 0;
  for (const auto& ev : events) {
    auto res = extract_merge_instance(ev, index, frame_period_ms);
    if (res.reject) {
      ++out.report.rejections[to_string(*res.reject)];
      continue;
    }
    auto& inst = *res.instance;
    if (label_feasibility(inst, inst.triple.merge_frame_index, params))
      ++merge_frame_true;
    auto samples = label_instance(inst, params);
    out.samples.insert(out.samples.end(), samples.begin(), samples.end());
    out.instances.push_back(std::move(inst));
  }
  out.report.instances_retained = out.instances.size();
  out.report.merge_frame_true_fraction =
      out.instances.empty() ? 0.0
                            : static_cast<double>(merge_frame_true) / out.instances.size();
  return out;
}

inline json to_json(const LabeledSample& s) {
  return json{{"instance_id", s.instance_id},
              {"frame_index", s.frame_index},
              {"features", s.features},
              {"merge_feasible", s.merge_feasible},
              {"accel_class", s.accel_class},
              {"heading_class", s.heading_class}};
}

inline LabeledSample sample_from_json(const json& j) {
  LabeledSample s;
  s.instance_id = j.at("instance_id").get<std::string>();
  s.frame_index = j.at("frame_index").get<int>();
  const auto& fx = j.at("features");
  if (fx.size() != kFeatureDim) throw format_error("feature vector length mismatch");
  for (std::size_t i = 0; i < kFeatureDim; ++i) s.features[i] = fx[i].get<double>();
  s.merge_feasible = j.at("merge_feasible").get<bool>();
  s.accel_class = j.at("accel_class").get<int>();
  s.heading_class = j.at("heading_class").get<int>();
  return s;
}

inline void write_samples_ndjson(const std::string& path,
                                 const std::vector<LabeledSample>& samples) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw io_error("cannot write " + path);
  for (const auto& s : samples) outf << to_json(s).dump() << "\n";
}

inline std::vector<LabeledSample> read_samples_ndjson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read " + path);
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw format_error(path + ": bad JSON on line " + std::to_string(lineno));
    out.push_back(sample_from_json(j));
  }
  return out;
}

}  // namespace lmo::dataset
