#include "lmo/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmo/rng.hpp"
#include "synthetic.hpp"

using namespace lmo;
using namespace lmo::dataset;

namespace {

// oracle: scan bin edges directly instead of the closed-form floor
int accel_class_oracle(double a) {
  a = std::clamp(a, -4.5, 4.5);
  for (int k = 0; k < kAccelClasses; ++k)
    if (a < -4.5 + 0.5 * (k + 1)) return k;
  return kAccelClasses - 1;
}

int heading_class_oracle(double h) {
  h = std::clamp(h, -30.0, 30.0);
  for (int k = 0; k < kHeadingClasses; ++k)
    if (h < -30.0 + 5.0 * (k + 1)) return k;
  return kHeadingClasses - 1;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_data_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (!line.empty() && line != "\r") ++n;
  }
  return n;
}

// Hand-built 70-frame instance on a northbound centerline through the origin.
// Placement defaults keep every frame feasible; tests override single frames.
struct ManualFrame {
  double m_y{0.0}, m_x{0.0}, m_v{12.0}, m_a{0.0};
  double p_y{1000.0}, p_v{12.0};
  double f_y{-1000.0}, f_v{12.0};
};

std::vector<ManualFrame> default_frames() {
  std::vector<ManualFrame> fr(kInstanceFrames);
  for (int k = 0; k < kInstanceFrames; ++k) fr[k].m_y = 60.0 + k;
  return fr;
}

MergeInstance build_manual(const std::vector<ManualFrame>& fr) {
  MergeInstance inst;
  inst.instance_id = "manual";
  inst.lane_axis = {0.0, 1.0};
  inst.centerline_point = {0.0, 0.0};
  auto mk = [](const std::string& id, std::int64_t ts, double x, double y, double v,
               double a) {
    VehicleState s;
    s.vehicle_id = id;
    s.timestamp_ms = ts;
    s.position = {x, y};
    s.speed_mps = v;
    s.accel_mps2 = a;
    s.heading_deg = 0.0;
    s.lane_id = 1;
    s.length_m = 4.0;
    s.width_m = 1.8;
    s.connected = true;
    s.source = StateSource::onboard;
    return s;
  };
  for (std::size_t k = 0; k < fr.size(); ++k) {
    const std::int64_t ts = static_cast<std::int64_t>(k) * 100;
    FrameStates fs;
    fs.m = mk("M", ts, fr[k].m_x, fr[k].m_y, fr[k].m_v, fr[k].m_a);
    fs.p = mk("P", ts, 0.0, fr[k].p_y, fr[k].p_v, 0.0);
    fs.f = mk("F", ts, 0.0, fr[k].f_y, fr[k].f_v, 0.0);
    inst.frames.push_back(fs);
  }
  inst.triple = {"M", "P", "F", 1, inst.frames[kFramesBefore].m.position,
                 kFramesBefore};
  inst.merge_s = inst.longitudinal(inst.triple.merge_point);
  return inst;
}

std::vector<TrajectoryFrame> straight_track(const std::string& vid, int first, int n,
                                            double y0, double v, int lane) {
  std::vector<TrajectoryFrame> out;
  for (int k = 0; k < n; ++k) {
    TrajectoryFrame f;
    f.frame_index = first + k;
    f.state.vehicle_id = vid;
    f.state.timestamp_ms = static_cast<std::int64_t>(first + k) * 100;
    f.state.position = {0.0, y0 + v * 0.1 * k};
    f.state.speed_mps = v;
    f.state.lane_id = lane;
    f.state.length_m = 4.0;
    f.state.width_m = 1.8;
    out.push_back(f);
  }
  return out;
}

// merging track: lane 2 until flip_frame, lane 1 from it onward
std::vector<TrajectoryFrame> merging_track(const std::string& vid, int n, double y0,
                                           double v, int flip_frame) {
  auto out = straight_track(vid, 0, n, y0, v, 2);
  for (int k = 0; k < n; ++k) {
    out[k].state.position.x = k < flip_frame ? 3.6 : 0.0;
    if (k >= flip_frame) out[k].state.lane_id = 1;
  }
  return out;
}

}  // namespace

TEST(Binning, AccelExamples) {
  EXPECT_EQ(accel_class_of(0.0), 9);
  EXPECT_EQ(accel_class_of(4.0 / 3.0), 11);
  EXPECT_EQ(accel_class_of(-4.5), 0);
  EXPECT_EQ(accel_class_of(4.5), 18);
  EXPECT_EQ(accel_class_of(-4.0), 1);
  EXPECT_EQ(accel_class_of(-100.0), 0);
  EXPECT_EQ(accel_class_of(100.0), 18);
}

TEST(Binning, AccelMatchesEdgeScanOracle) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-6.0, 6.0);
    EXPECT_EQ(accel_class_of(a), accel_class_oracle(a)) << "a=" << a;
  }
  for (int k = 0; k <= 18; ++k) {
    const double edge = -4.5 + 0.5 * k;
    EXPECT_EQ(accel_class_of(edge), accel_class_oracle(edge)) << "edge=" << edge;
  }
}

TEST(Binning, HeadingExamples) {
  EXPECT_EQ(heading_class_of(0.0), 6);
  EXPECT_EQ(heading_class_of(-5.71), 4);
  EXPECT_EQ(heading_class_of(30.0), 12);
  EXPECT_EQ(heading_class_of(-30.0), 0);
  EXPECT_EQ(heading_class_of(90.0), 12);
  EXPECT_EQ(heading_class_of(-90.0), 0);
}

TEST(Binning, HeadingMatchesEdgeScanOracle) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const double h = rng.uniform(-40.0, 40.0);
    EXPECT_EQ(heading_class_of(h), heading_class_oracle(h)) << "h=" << h;
  }
}

TEST(MappingConfig, LoadsFieldsAndScales) {
  const auto path = temp_file("lmo_mapping.json");
  write_file(path, R"({"local_x":"X","position_scale":0.3048,"frame_period_ms":40})");
  const auto m = load_mapping(path.string());
  EXPECT_EQ(m.local_x, "X");
  EXPECT_EQ(m.vehicle_id, "Vehicle_ID");
  EXPECT_DOUBLE_EQ(m.position_scale, 0.3048);
  EXPECT_EQ(m.frame_period_ms, 40);

  write_file(path, "{not json");
  EXPECT_THROW(load_mapping(path.string()), format_error);
  EXPECT_THROW(load_mapping("/nonexistent/mapping.json"), io_error);
}

TEST(CsvParse, AppliesScalesAndSkipsBadRows) {
  const auto path = temp_file("lmo_parse.csv");
  write_file(path,
             "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,v_Acc,v_Length,v_Width,Lane_ID\n"
             "7,100,10.0,20.0,30.0,1.0,14.0,6.0,3\n"
             "7,101,10.0,20.5,30.0,1.0,14.0,6.0,3\n"
             "8,100,bad,20.0,30.0,1.0,14.0,6.0,3\n"
             "8,101,10.0,20.0,30.0,1.0,14.0,6.0\n"
             "8,102,10.0,20.0,-3.0,1.0,14.0,6.0,3\n");
  ColumnMapping map;
  map.position_scale = 0.3048;
  map.speed_scale = 0.3048;
  map.accel_scale = 0.3048;
  map.size_scale = 0.3048;
  const auto result = parse_trajectory_csv(path.string(), map);
  EXPECT_EQ(result.skipped_rows, 3u);
  ASSERT_EQ(result.frames.size(), 2u);
  const auto& s = result.frames[0].state;
  EXPECT_EQ(s.vehicle_id, "7");
  EXPECT_EQ(s.timestamp_ms, 10000);
  EXPECT_DOUBLE_EQ(s.position.x, 10.0 * 0.3048);
  EXPECT_DOUBLE_EQ(s.position.y, 20.0 * 0.3048);
  EXPECT_DOUBLE_EQ(s.speed_mps, 30.0 * 0.3048);
  EXPECT_DOUBLE_EQ(s.length_m, 14.0 * 0.3048);
  EXPECT_EQ(s.lane_id, 3);
  EXPECT_NEAR(s.heading_deg, 0.0, 1e-12);  // derived from the +y step
  EXPECT_NEAR(result.frames[1].state.heading_deg, 0.0, 1e-12);  // carried forward
}

TEST(CsvParse, MissingColumnAndEmptyFileThrow) {
  const auto path = temp_file("lmo_parse_bad.csv");
  write_file(path, "Vehicle_ID,Frame_ID\n1,2\n");
  EXPECT_THROW(parse_trajectory_csv(path.string()), format_error);
  write_file(path, "");
  EXPECT_THROW(parse_trajectory_csv(path.string()), format_error);
  EXPECT_THROW(parse_trajectory_csv("/nonexistent/rows.csv"), io_error);
}

TEST(CsvParse, SevenHundredRowFixtureMatchesLineCountOracle) {
  std::ostringstream csv;
  csv << "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,v_Acc,v_Length,v_Width,Lane_ID\n";
  for (int vid = 1; vid <= 10; ++vid)
    for (int f = 0; f < 70; ++f)
      csv << vid << ',' << f << ",0.0," << (vid * 100 + f) << ",12.0,0.0,4.0,1.8,1\n";
  const auto path = temp_file("lmo_700.csv");
  write_file(path, csv.str());

  const auto result = parse_trajectory_csv(path.string());
  EXPECT_EQ(count_data_lines(path), 700u);
  EXPECT_EQ(result.frames.size() + result.skipped_rows, count_data_lines(path));
  EXPECT_EQ(result.skipped_rows, 0u);
}

TEST(CsvParse, SyntheticFixtureMatchesLineCountOracle) {
  const auto path = temp_file("lmo_synth_count.csv");
  write_file(path, synth::trajectory_csv());
  const auto result = parse_trajectory_csv(path.string());
  EXPECT_EQ(result.frames.size() + result.skipped_rows, count_data_lines(path));
  EXPECT_EQ(result.skipped_rows, 0u);
}

TEST(DetectMerges, LaneSequenceWithReturnYieldsTwoEvents) {
  auto track = straight_track("9", 0, 3, 0.0, 12.0, 3);
  track[1].state.lane_id = 2;  // lanes 3, 2, 3
  const auto events = detect_lane_merges(track);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].from_lane, 3);
  EXPECT_EQ(events[0].to_lane, 2);
  EXPECT_EQ(events[0].merge_timestamp_ms, 100);
  EXPECT_EQ(events[1].from_lane, 2);
  EXPECT_EQ(events[1].to_lane, 3);
  EXPECT_EQ(events[1].merge_timestamp_ms, 200);
}

TEST(DetectMerges, MatchesRunCountOracle) {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(60));
    auto track = straight_track("v", 0, n, 0.0, 12.0, 1);
    for (auto& f : track) f.state.lane_id = 1 + static_cast<int>(rng.uniform_index(3));

    // oracle: a lane change per run boundary, so changes = runs - 1
    int runs = 0;
    int prev = -1;
    for (const auto& f : track) {
      if (f.state.lane_id != prev) ++runs;
      prev = f.state.lane_id;
    }
    const auto events = detect_lane_merges(track);
    EXPECT_EQ(static_cast<int>(events.size()), runs - 1);
    for (const auto& e : events) EXPECT_NE(e.from_lane, e.to_lane);
  }
}

TEST(Extraction, SyntheticGroupYieldsCleanInstance) {
  synth::SynthOptions opt;
  opt.groups = 1;
  const auto path = temp_file("lmo_synth_one.csv");
  write_file(path, synth::trajectory_csv(opt));
  const auto parsed = parse_trajectory_csv(path.string());
  const auto result = run_pipeline(parsed.frames, parsed.skipped_rows);

  EXPECT_EQ(result.report.events_detected, 1u);
  ASSERT_EQ(result.instances.size(), 1u);
  EXPECT_TRUE(result.report.rejections.empty());
  const auto& inst = result.instances[0];
  ASSERT_EQ(inst.frames.size(), static_cast<std::size_t>(kInstanceFrames));
  EXPECT_EQ(inst.triple.merging, "1");
  EXPECT_EQ(inst.triple.preceding, "3");  // nearest ahead, not the far lead "4"
  EXPECT_EQ(inst.triple.following, "2");
  EXPECT_EQ(inst.triple.target_lane, 1);
  EXPECT_EQ(inst.triple.merge_frame_index, kFramesBefore);
  EXPECT_NEAR(inst.lane_axis.x, 0.0, 1e-12);
  EXPECT_NEAR(inst.lane_axis.y, 1.0, 1e-12);
  EXPECT_NEAR(inst.lateral(inst.triple.merge_point), 1.71, 1e-9);

  const std::int64_t t0 = inst.frames[0].m.timestamp_ms;
  for (int k = 0; k < kInstanceFrames; ++k) {
    EXPECT_EQ(inst.frames[k].m.timestamp_ms, t0 + k * 100);
    EXPECT_EQ(inst.frames[k].p.timestamp_ms, inst.frames[k].m.timestamp_ms);
    EXPECT_EQ(inst.frames[k].f.timestamp_ms, inst.frames[k].m.timestamp_ms);
  }

  const auto labels = feasibility_labels(inst);
  EXPECT_FALSE(labels[0]);  // still pinched against F at the window start
  EXPECT_TRUE(labels[kFramesBefore]);
  EXPECT_DOUBLE_EQ(result.report.merge_frame_true_fraction, 1.0);
}

TEST(Extraction, RejectsTruncatedWindow) {
  auto frames = merging_track("m", 50, 54.0, 12.0, 20);  // only 20 frames of history
  auto p = straight_track("p", 0, 50, 80.0, 12.0, 1);
  auto f = straight_track("f", 0, 50, 30.0, 12.0, 1);
  frames.insert(frames.end(), p.begin(), p.end());
  frames.insert(frames.end(), f.begin(), f.end());
  const FrameIndex index(frames);
  const auto events = detect_lane_merges(*index.vehicle("m"));
  ASSERT_EQ(events.size(), 1u);
  const auto out = extract_merge_instance(events[0], index);
  ASSERT_TRUE(out.reject.has_value());
  EXPECT_EQ(*out.reject, RejectReason::truncated_window);
  EXPECT_STREQ(to_string(*out.reject), "truncated_window");
}

TEST(Extraction, RejectsWhenNoVehicleAhead) {
  auto frames = merging_track("m", 120, 54.0, 12.0, 60);
  auto f = straight_track("f", 0, 120, 30.0, 12.0, 1);
  frames.insert(frames.end(), f.begin(), f.end());
  const FrameIndex index(frames);
  const auto events = detect_lane_merges(*index.vehicle("m"));
  ASSERT_EQ(events.size(), 1u);
  const auto out = extract_merge_instance(events[0], index);
  ASSERT_TRUE(out.reject.has_value());
  EXPECT_EQ(*out.reject, RejectReason::no_preceding);
}

TEST(Extraction, RejectsWhenNoVehicleBehind) {
  auto frames = merging_track("m", 120, 54.0, 12.0, 60);
  auto p = straight_track("p", 0, 120, 80.0, 12.0, 1);
  frames.insert(frames.end(), p.begin(), p.end());
  const FrameIndex index(frames);
  const auto events = detect_lane_merges(*index.vehicle("m"));
  ASSERT_EQ(events.size(), 1u);
  const auto out = extract_merge_instance(events[0], index);
  ASSERT_TRUE(out.reject.has_value());
  EXPECT_EQ(*out.reject, RejectReason::no_following);
}

TEST(Extraction, RejectsNeighbourVanishingMidWindow) {
  auto frames = merging_track("m", 120, 54.0, 12.0, 60);
  auto p = straight_track("p", 0, 80, 80.0, 12.0, 1);  // gone before frame 90
  auto f = straight_track("f", 0, 120, 30.0, 12.0, 1);
  frames.insert(frames.end(), p.begin(), p.end());
  frames.insert(frames.end(), f.begin(), f.end());
  const FrameIndex index(frames);
  const auto events = detect_lane_merges(*index.vehicle("m"));
  ASSERT_EQ(events.size(), 1u);
  const auto out = extract_merge_instance(events[0], index);
  ASSERT_TRUE(out.reject.has_value());
  EXPECT_EQ(*out.reject, RejectReason::no_preceding);
}

TEST(Rules, MeanAccelSinceMergeMatchesScalarOracle) {
  auto fr = default_frames();
  fr[40].m_a = 1.0;
  fr[41].m_a = 1.0;
  fr[42].m_a = 2.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  ASSERT_TRUE(labels[42]);

  const double raw = derive_target_acceleration_raw(inst, 42, labels);
  EXPECT_DOUBLE_EQ(raw, (1.0 + 1.0 + 2.0) / 3.0);
  EXPECT_EQ(derive_target_acceleration(inst, 42, labels), accel_class_oracle(raw));
  EXPECT_EQ(derive_target_acceleration(inst, 42, labels), 11);

  // at the merge frame itself the mean collapses to that frame's value
  EXPECT_DOUBLE_EQ(derive_target_acceleration_raw(inst, 40, labels), 1.0);
  EXPECT_EQ(derive_target_acceleration(inst, 40, labels), 11);
}

TEST(Rules, MeanAccelToMergeForFeasibleFrames) {
  auto fr = default_frames();
  fr[38].m_a = 2.0;
  fr[39].m_a = 3.0;
  fr[40].m_a = 4.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  ASSERT_TRUE(labels[38]);

  const double raw = derive_target_acceleration_raw(inst, 38, labels);
  EXPECT_DOUBLE_EQ(raw, (2.0 + 3.0 + 4.0) / 3.0);
  EXPECT_EQ(derive_target_acceleration(inst, 38, labels), accel_class_oracle(3.0));
  EXPECT_EQ(derive_target_acceleration(inst, 38, labels), 15);
}

TEST(Rules, SpeedMatchingForInfeasibleFrames) {
  auto fr = default_frames();
  for (int k : {35, 36, 37}) fr[k].f_y = fr[k].m_y;  // level with F: infeasible
  fr[35].m_v = 10.0;
  fr[36].m_v = 11.0;
  fr[37].m_v = 12.0;
  fr[38].m_v = 13.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  ASSERT_FALSE(labels[35]);
  ASSERT_FALSE(labels[37]);
  ASSERT_TRUE(labels[38]);

  // speed-matching target over [35, 38]: mean speed 11.5, reached in 0.3 s
  const double raw = derive_target_acceleration_raw(inst, 35, labels);
  EXPECT_DOUBLE_EQ(raw, ((10.0 + 11.0 + 12.0 + 13.0) / 4.0 - 10.0) / 0.3);
  EXPECT_EQ(derive_target_acceleration(inst, 35, labels), accel_class_oracle(raw));
  EXPECT_EQ(derive_target_acceleration(inst, 35, labels), 18);  // clipped at +4.5
}

TEST(Rules, FallsBackToMergeFrameWhenNothingLaterIsFeasible) {
  auto fr = default_frames();
  for (int k = 35; k < kInstanceFrames; ++k) fr[k].f_y = fr[k].m_y;
  for (int k = 35; k <= 39; ++k) fr[k].m_v = 12.0;
  fr[40].m_v = 18.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  for (int k = 35; k < kInstanceFrames; ++k) ASSERT_FALSE(labels[k]);

  const double raw = derive_target_acceleration_raw(inst, 35, labels);
  EXPECT_DOUBLE_EQ(raw, ((12.0 * 5 + 18.0) / 6.0 - 12.0) / 0.5);
  EXPECT_EQ(derive_target_acceleration(inst, 35, labels), accel_class_oracle(2.0));
}

TEST(HeadingTargets, TowardMergePointWhenFeasible) {
  auto fr = default_frames();
  fr[40].m_x = 0.0;
  fr[40].m_y = 100.0;  // merge point lands at (0, 100)
  fr[50].m_x = 1.0;
  fr[50].m_y = 90.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  ASSERT_TRUE(labels[50]);

  const double raw = derive_target_heading_raw(inst, 50, labels);
  const double expected = rad2deg(std::atan2(-1.0, 10.0));
  EXPECT_NEAR(raw, expected, 1e-12);
  EXPECT_EQ(derive_target_heading(inst, 50, labels), heading_class_oracle(expected));
  EXPECT_EQ(derive_target_heading(inst, 50, labels), 4);
}

TEST(HeadingTargets, TowardFirstFeasiblePositionOtherwise) {
  auto fr = default_frames();
  fr[30].f_y = fr[30].m_y;  // infeasible at 30 only
  fr[30].m_x = 3.6;
  fr[31].m_x = 3.0;
  const auto inst = build_manual(fr);
  const auto labels = feasibility_labels(inst);
  ASSERT_FALSE(labels[30]);
  ASSERT_TRUE(labels[31]);

  const double raw = derive_target_heading_raw(inst, 30, labels);
  const double expected = rad2deg(std::atan2(3.0 - 3.6, fr[31].m_y - fr[30].m_y));
  EXPECT_NEAR(raw, expected, 1e-12);
  EXPECT_EQ(derive_target_heading(inst, 30, labels), heading_class_oracle(expected));
}

TEST(HeadingTargets, ZeroDisplacementIsStraightAhead) {
  const auto inst = build_manual(default_frames());
  const auto labels = feasibility_labels(inst);
  ASSERT_TRUE(labels[40]);
  EXPECT_DOUBLE_EQ(derive_target_heading_raw(inst, 40, labels), 0.0);
  EXPECT_EQ(derive_target_heading(inst, 40, labels), 6);
}

TEST(Features, HandComputedVector) {
  auto fr = default_frames();
  fr[20].m_x = 2.5;
  fr[20].m_y = 80.0;
  fr[20].m_v = 16.0;
  fr[20].m_a = 0.7;
  fr[20].p_y = 95.0;
  fr[20].p_v = 13.0;
  fr[20].f_y = 61.0;
  fr[20].f_v = 11.0;
  fr[40].m_x = 0.0;
  fr[40].m_y = 100.0;
  const auto inst = build_manual(fr);
  ASSERT_DOUBLE_EQ(inst.merge_s, 100.0);

  const auto x = build_feature_vector(inst, 20);
  EXPECT_DOUBLE_EQ(x[0], 80.0 - 100.0);
  EXPECT_DOUBLE_EQ(x[1], 2.5);
  EXPECT_DOUBLE_EQ(x[2], 16.0);
  EXPECT_DOUBLE_EQ(x[3], 0.7);
  EXPECT_DOUBLE_EQ(x[4], 95.0 - 100.0);
  EXPECT_DOUBLE_EQ(x[5], 0.0);
  EXPECT_DOUBLE_EQ(x[6], 13.0);
  EXPECT_DOUBLE_EQ(x[8], 61.0 - 100.0);
  EXPECT_DOUBLE_EQ(x[10], 11.0);
  EXPECT_DOUBLE_EQ(x[12], (95.0 - 80.0) - 4.0);
  EXPECT_DOUBLE_EQ(x[13], (80.0 - 61.0) - 4.0);
  EXPECT_DOUBLE_EQ(x[14], 13.0 - 16.0);
  EXPECT_DOUBLE_EQ(x[15], 16.0 - 11.0);
  EXPECT_DOUBLE_EQ(x[16], 20.0 / 16.0);
}

TEST(Features, TimeToMergeEdgeCases) {
  auto fr = default_frames();
  fr[40].m_y = 100.0;
  fr[45].m_y = 110.0;  // past the merge point
  fr[20].m_y = 95.0;
  fr[20].m_v = 0.0;  // stationary: speed floor kicks in
  fr[25].m_y = 20.0;
  fr[25].m_v = 0.0;  // far and stationary: capped
  const auto inst = build_manual(fr);

  EXPECT_DOUBLE_EQ(build_feature_vector(inst, 45)[16], 0.0);
  EXPECT_DOUBLE_EQ(build_feature_vector(inst, 40)[16], 0.0);
  EXPECT_DOUBLE_EQ(build_feature_vector(inst, 20)[16], 5.0 / 0.1);
  EXPECT_DOUBLE_EQ(build_feature_vector(inst, 25)[16], kTimeToMergeCapS);
}

namespace {

std::vector<LabeledSample> fake_samples(int instances, int per_instance) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < instances; ++i) {
    for (int k = 0; k < per_instance; ++k) {
      LabeledSample s;
      s.instance_id = "i" + std::to_string(1000 + i);
      s.frame_index = k;
      s.features[0] = i;
      s.merge_feasible = (i + k) % 2 == 0;
      s.accel_class = i % kAccelClasses;
      s.heading_class = k % kHeadingClasses;
      out.push_back(s);
    }
  }
  return out;
}

std::map<std::string, int> bucket_map(const Split& split) {
  std::map<std::string, int> buckets;
  auto fill = [&](const std::vector<LabeledSample>& v, int b) {
    for (const auto& s : v) {
      const auto it = buckets.find(s.instance_id);
      if (it == buckets.end()) buckets.emplace(s.instance_id, b);
      else EXPECT_EQ(it->second, b) << s.instance_id << " spans buckets";
    }
  };
  fill(split.train, 0);
  fill(split.test, 1);
  fill(split.validation, 2);
  return buckets;
}

int count_bucket(const std::map<std::string, int>& m, int b) {
  int n = 0;
  for (const auto& [id, bucket] : m)
    if (bucket == b) ++n;
  return n;
}

}  // namespace

TEST(SplitDataset, HundredInstancesSplitSeventyTwentyTen) {
  const auto samples = fake_samples(100, 3);
  const auto split = split_dataset(samples, 42);
  const auto buckets = bucket_map(split);
  EXPECT_EQ(count_bucket(buckets, 0), 70);
  EXPECT_EQ(count_bucket(buckets, 1), 20);
  EXPECT_EQ(count_bucket(buckets, 2), 10);
  EXPECT_EQ(split.train.size() + split.test.size() + split.validation.size(),
            samples.size());
}

TEST(SplitDataset, TenInstancesSplitSevenTwoOne) {
  const auto split = split_dataset(fake_samples(10, 70), 1);
  const auto buckets = bucket_map(split);
  EXPECT_EQ(count_bucket(buckets, 0), 7);
  EXPECT_EQ(count_bucket(buckets, 1), 2);
  EXPECT_EQ(count_bucket(buckets, 2), 1);
}

TEST(SplitDataset, FewerThanTenInstancesThrows) {
  EXPECT_THROW(split_dataset(fake_samples(9, 70), 1), validation_error);
  EXPECT_THROW(split_dataset({}, 1), validation_error);
}

TEST(SplitDataset, DeterministicInSeedAndSensitiveToIt) {
  const auto samples = fake_samples(100, 2);
  const auto a = bucket_map(split_dataset(samples, 9));
  const auto b = bucket_map(split_dataset(samples, 9));
  const auto c = bucket_map(split_dataset(samples, 10));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Pipeline, SyntheticRunRetainsAllGroupsWithBothLabels) {
  const auto path = temp_file("lmo_synth_full.csv");
  write_file(path, synth::trajectory_csv());
  const auto parsed = parse_trajectory_csv(path.string());
  const auto result = run_pipeline(parsed.frames, parsed.skipped_rows);

  EXPECT_EQ(result.report.events_detected, 12u);
  EXPECT_EQ(result.report.instances_retained, 12u);
  EXPECT_TRUE(result.report.rejections.empty());
  EXPECT_DOUBLE_EQ(result.report.merge_frame_true_fraction, 1.0);
  EXPECT_EQ(result.samples.size(), 12u * kInstanceFrames);

  std::size_t feasible = 0;
  for (const auto& s : result.samples) feasible += s.merge_feasible ? 1 : 0;
  EXPECT_GT(feasible, 0u);
  EXPECT_LT(feasible, result.samples.size());
}

TEST(Pipeline, RerunsAreByteIdentical) {
  const auto csv_path = temp_file("lmo_synth_rerun.csv");
  write_file(csv_path, synth::trajectory_csv());

  auto run_once = [&](const std::string& out_name) {
    const auto parsed = parse_trajectory_csv(csv_path.string());
    const auto result = run_pipeline(parsed.frames, parsed.skipped_rows);
    const auto out = temp_file(out_name);
    write_samples_ndjson(out.string(), result.samples);
    return read_file(out);
  };
  const auto first = run_once("lmo_samples_a.ndjson");
  const auto second = run_once("lmo_samples_b.ndjson");
  EXPECT_FALSE(first.empty());
  EXPECT_EQ(first, second);
}

TEST(Pipeline, NdjsonRoundTripPreservesSamples) {
  const auto csv_path = temp_file("lmo_synth_rt.csv");
  synth::SynthOptions opt;
  opt.groups = 2;
  write_file(csv_path, synth::trajectory_csv(opt));
  const auto parsed = parse_trajectory_csv(csv_path.string());
  const auto result = run_pipeline(parsed.frames, parsed.skipped_rows);

  const auto out = temp_file("lmo_samples_rt.ndjson");
  write_samples_ndjson(out.string(), result.samples);
  const auto back = read_samples_ndjson(out.string());
  ASSERT_EQ(back.size(), result.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].instance_id, result.samples[i].instance_id);
    EXPECT_EQ(back[i].frame_index, result.samples[i].frame_index);
    EXPECT_EQ(back[i].merge_feasible, result.samples[i].merge_feasible);
    EXPECT_EQ(back[i].accel_class, result.samples[i].accel_class);
    EXPECT_EQ(back[i].heading_class, result.samples[i].heading_class);
    for (std::size_t d = 0; d < kFeatureDim; ++d)
      EXPECT_DOUBLE_EQ(back[i].features[d], result.samples[i].features[d]);
  }
}
