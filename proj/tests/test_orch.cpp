#include <gtest/gtest.h>

#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lmo/net.hpp"
#include "lmo/orch/checker.hpp"
#include "lmo/orch/core.hpp"
#include "lmo/orch/kb.hpp"
#include "lmo/orch/log.hpp"
#include "lmo/orch/scene.hpp"
#include "lmo/orch/server.hpp"
#include "lmo/rng.hpp"
#include "lmo/wire.hpp"

namespace lmo::orch {
namespace {

using json = nlohmann::json;

LaneConfig test_lane_config() {
  LaneConfig c;
  c.boundary = {-0.5, -0.5, 0.5, 0.5};
  c.origin = {0.0, 0.0};
  c.target_lane_id = 1;
  c.merge_lane_id = 2;
  c.frame = {{0.0, 0.0}, {0.0, 1.0}};
  return c;
}

VehicleState vs(const std::string& id, int lane, double x, double y,
                double speed, std::int64_t ts,
                const GeoOrigin& origin = {0.0, 0.0}) {
  VehicleState v;
  v.vehicle_id = id;
  v.lane_id = lane;
  v.position = {x, y};
  v.speed_mps = speed;
  v.heading_deg = 0.0;
  v.timestamp_ms = ts;
  const LatLon ll = unproject_coordinates(v.position, origin);
  v.lat = ll.lat;
  v.lon = ll.lon;
  return v;
}

std::string update_line(const VehicleState& s,
                        const GeoOrigin& origin = {0.0, 0.0}) {
  return wire::to_line(wire::from_state(s, origin));
}

// A network whose greedy action is always 7: hold speed, hold heading.
rl::DuelingNetwork hold_net() {
  rl::DuelingNetwork net({8, 4, 15}, 1);
  for (std::size_t i = 0; i < net.parameter_count(); ++i)
    net.set_parameter(i, 0.0);
  net.advantage().b[7] = 1.0;
  return net;
}

OrchestratorConfig test_config(int workers) {
  OrchestratorConfig cfg;
  cfg.lane = test_lane_config();
  cfg.workers = workers;
  return cfg;
}

std::vector<std::string> compute_epoch_violations(const EventLog& log) {
  std::map<std::string, std::uint64_t> last;
  std::vector<std::string> violations;
  for (const auto& e : log.entries()) {
    if (e.kind != "compute") continue;
    const std::string target = e.detail.at("target").get<std::string>();
    const std::uint64_t epoch = e.detail.at("epoch").get<std::uint64_t>();
    auto it = last.find(target);
    if (it != last.end() && epoch <= it->second)
      violations.push_back(target + " epoch " + std::to_string(epoch) +
                           " after " + std::to_string(it->second));
    last[target] = epoch;
  }
  return violations;
}

TEST(KbTest, FreshestWinsOnOutOfOrderUpserts) {
  KnowledgeBase kb;
  EXPECT_TRUE(kb.upsert(vs("a", 1, 0, 0, 10, 100)));
  EXPECT_FALSE(kb.upsert(vs("a", 1, 0, 5, 12, 50)));
  EXPECT_FALSE(kb.upsert(vs("a", 1, 0, 7, 13, 100)));

  auto snap = kb.snapshot();
  ASSERT_EQ(snap.states.size(), 1u);
  EXPECT_EQ(snap.states[0].timestamp_ms, 100);
  EXPECT_DOUBLE_EQ(snap.states[0].speed_mps, 10.0);

  EXPECT_TRUE(kb.upsert(vs("a", 1, 0, 9, 14, 150)));
  snap = kb.snapshot();
  EXPECT_EQ(snap.states[0].timestamp_ms, 150);
}

TEST(KbTest, SweepEvictsOnlyBeyondHorizon) {
  KnowledgeBase kb(1000);
  kb.upsert(vs("old", 1, 0, 0, 10, 0));
  kb.upsert(vs("edge", 1, 0, 0, 10, 500));
  kb.upsert(vs("fresh", 1, 0, 0, 10, 1500));

  EXPECT_EQ(kb.sweep(1500), 1u);  // only ts=0 is strictly older than horizon
  ASSERT_EQ(kb.size(), 2u);

  EXPECT_EQ(kb.sweep(1501), 1u);  // ts=500 now 1001 ms old
  auto snap = kb.snapshot();
  ASSERT_EQ(snap.states.size(), 1u);
  EXPECT_EQ(snap.states[0].vehicle_id, "fresh");
}

TEST(KbTest, ShuffledReplayConvergesToFreshestPerVehicle) {
  Rng rng(11);
  std::vector<VehicleState> updates;
  for (int v = 0; v < 10; ++v) {
    std::vector<std::int64_t> stamps;
    for (int i = 0; i < 20; ++i) stamps.push_back(i * 7 + 3);
    rng.shuffle(stamps);
    for (const auto ts : stamps) {
      auto s = vs("veh" + std::to_string(v), 1, 0, ts * 0.5, ts / 10.0, ts);
      updates.push_back(s);
    }
  }

  std::map<std::string, VehicleState> oracle;
  for (const auto& u : updates) {
    auto it = oracle.find(u.vehicle_id);
    if (it == oracle.end() || it->second.timestamp_ms < u.timestamp_ms)
      oracle.insert_or_assign(u.vehicle_id, u);
  }

  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    auto order = updates;
    rng.shuffle(order);
    KnowledgeBase kb;
    std::uint64_t prev_epoch = 0;
    for (const auto& u : order) {
      kb.upsert(u);
      const auto epoch = kb.epoch();
      EXPECT_GE(epoch, prev_epoch);
      prev_epoch = epoch;
    }
    const auto snap = kb.snapshot();
    ASSERT_EQ(snap.states.size(), oracle.size());
    for (const auto& s : snap.states) {
      const auto& want = oracle.at(s.vehicle_id);
      EXPECT_EQ(s.timestamp_ms, want.timestamp_ms) << s.vehicle_id;
      EXPECT_DOUBLE_EQ(s.speed_mps, want.speed_mps) << s.vehicle_id;
    }
  }
}

TEST(KbTest, SnapshotsAreConsistentUnderConcurrentWrites) {
  KnowledgeBase kb;
  std::atomic<bool> done{false};

  std::thread writer([&] {
    for (int i = 1; i <= 20000; ++i) {
      auto s = vs("a", 1, 0, 0, static_cast<double>(i), i);
      s.accel_mps2 = 2.0 * i;
      kb.upsert(s);
    }
    done = true;
  });

  std::uint64_t prev_epoch = 0;
  std::int64_t prev_ts = 0;
  while (!done) {
    const auto snap = kb.snapshot();
    EXPECT_GE(snap.epoch, prev_epoch);
    prev_epoch = snap.epoch;
    if (snap.states.empty()) continue;
    const auto& s = snap.states[0];
    // one upsert per timestamp: a torn copy would break the field coupling
    EXPECT_DOUBLE_EQ(s.speed_mps, static_cast<double>(s.timestamp_ms));
    EXPECT_DOUBLE_EQ(s.accel_mps2, 2.0 * s.timestamp_ms);
    EXPECT_GE(s.timestamp_ms, prev_ts);
    prev_ts = s.timestamp_ms;
  }
  writer.join();
  EXPECT_EQ(kb.snapshot().states[0].timestamp_ms, 20000);
}

TEST(SceneTest, DetectsNearestNeighboursInsideBoundary) {
  const auto cfg = test_lane_config();
  std::vector<VehicleState> states;
  states.push_back(vs("m", 2, 3.6, 10, 10, 0));
  states.push_back(vs("p_far", 1, 0, 30, 10, 0));
  states.push_back(vs("p_near", 1, 0, 18, 10, 0));
  states.push_back(vs("f_near", 1, 0, 5, 10, 0));
  states.push_back(vs("f_far", 1, 0, -20, 10, 0));
  auto outside = vs("p_outside", 1, 0, 12, 10, 0);
  outside.lat = 2.0;  // closest ahead, but not in the boundary
  states.push_back(outside);

  const auto scene = detect_scene(states, cfg, "m");
  ASSERT_TRUE(scene.has_value());
  EXPECT_EQ(scene->m.vehicle_id, "m");
  EXPECT_EQ(scene->p.vehicle_id, "p_near");
  EXPECT_EQ(scene->f.vehicle_id, "f_near");
}

TEST(SceneTest, SceneRequiresMergeVehicleAndBothNeighbours) {
  const auto cfg = test_lane_config();
  const auto m = vs("m", 2, 3.6, 10, 10, 0);
  const auto p = vs("p", 1, 0, 30, 10, 0);
  const auto f = vs("f", 1, 0, -10, 10, 0);

  EXPECT_FALSE(detect_scene({m, p}, cfg, "m").has_value());
  EXPECT_FALSE(detect_scene({m, f}, cfg, "m").has_value());
  EXPECT_FALSE(detect_scene({p, f}, cfg, "m").has_value());

  auto wrong_lane = m;
  wrong_lane.lane_id = 1;
  EXPECT_FALSE(detect_scene({wrong_lane, p, f}, cfg, "m").has_value());

  auto outside = m;
  outside.lat = 2.0;
  EXPECT_FALSE(detect_scene({outside, p, f}, cfg, "m").has_value());

  // zero longitudinal offset counts as behind
  const auto level = vs("level", 1, 0, 10, 10, 0);
  const auto scene = detect_scene({m, p, level}, cfg, "m");
  ASSERT_TRUE(scene.has_value());
  EXPECT_EQ(scene->f.vehicle_id, "level");
}

TEST(SceneTest, AffectedTargetsTracksSceneMembership) {
  const auto cfg = test_lane_config();
  std::vector<VehicleState> states;
  states.push_back(vs("m1", 2, 3.6, 10, 10, 0));
  states.push_back(vs("p1", 1, 0, 30, 10, 0));
  states.push_back(vs("f1", 1, 0, -10, 10, 0));
  states.push_back(vs("m2", 2, 3.6, 510, 10, 0));
  states.push_back(vs("p2", 1, 0, 530, 10, 0));
  states.push_back(vs("f2", 1, 0, 490, 10, 0));
  states.push_back(vs("bystander", 1, 0, 2000, 10, 0));

  EXPECT_EQ(affected_targets(states, cfg, "p1"),
            std::vector<std::string>{"m1"});
  EXPECT_EQ(affected_targets(states, cfg, "m2"),
            std::vector<std::string>{"m2"});
  EXPECT_EQ(affected_targets(states, cfg, "f2"),
            std::vector<std::string>{"m2"});
  EXPECT_TRUE(affected_targets(states, cfg, "bystander").empty());
}

TEST(CheckerTest, PassesPlanEndingInSafeSlot) {
  const auto cfg = test_lane_config();
  const auto m = vs("m", 2, 3.6, 10, 10, 1000);
  const auto p = vs("p", 1, 0, 40, 10, 1000);
  const auto f = vs("f", 1, 0, -20, 10, 1000);

  rl::TrajectoryRecommendation rec;
  rec.ok = true;
  rl::LocalWaypoint w;
  w.timestamp_ms = 2000;
  w.position = {0.0, 20.0};
  w.speed_mps = 10.0;
  w.accel_mps2 = 0.0;
  w.heading_deg = 0.0;
  rec.waypoints.push_back(w);

  const auto res = check_recommendation(rec, m, p, f, cfg.frame);
  EXPECT_TRUE(res.pass);
  EXPECT_TRUE(res.reason.empty());
}

TEST(CheckerTest, RejectsAccelerationBeyondComfortBound) {
  const auto cfg = test_lane_config();
  const auto m = vs("m", 2, 3.6, 10, 10, 1000);
  const auto p = vs("p", 1, 0, 40, 10, 1000);
  const auto f = vs("f", 1, 0, -20, 10, 1000);

  rl::TrajectoryRecommendation rec;
  rec.ok = true;
  rl::LocalWaypoint w;
  w.timestamp_ms = 2000;
  w.position = {0.0, 20.0};
  w.speed_mps = 10.0;
  w.accel_mps2 = 6.0;
  rec.waypoints.push_back(w);
  auto res = check_recommendation(rec, m, p, f, cfg.frame);
  EXPECT_FALSE(res.pass);
  EXPECT_EQ(res.reason, "accel_bound");

  rec.waypoints[0].accel_mps2 = 0.0;
  rl::LocalWaypoint fw = w;
  fw.accel_mps2 = -5.0;
  rec.f_slowdown.push_back(fw);
  res = check_recommendation(rec, m, p, f, cfg.frame);
  EXPECT_FALSE(res.pass);
  EXPECT_EQ(res.reason, "accel_bound");
}

TEST(CheckerTest, RejectsPlanWhoseSlotClosesByPlanEnd) {
  const auto cfg = test_lane_config();
  const auto m = vs("m", 2, 3.6, 10, 10, 1000);
  const auto p = vs("p", 1, 0, 40, 10, 1000);
  const auto f = vs("f", 1, 0, 5, 20, 1000);  // fast follower overruns M

  rl::TrajectoryRecommendation rec;
  rec.ok = true;
  rl::LocalWaypoint w;
  w.timestamp_ms = 2000;
  w.position = {0.0, 20.0};
  w.speed_mps = 10.0;
  rec.waypoints.push_back(w);
  auto res = check_recommendation(rec, m, p, f, cfg.frame);
  EXPECT_FALSE(res.pass);
  EXPECT_EQ(res.reason, "unsafe_slot");

  rec.waypoints.clear();
  res = check_recommendation(rec, m, p, f, cfg.frame);
  EXPECT_FALSE(res.pass);
  EXPECT_EQ(res.reason, "empty_plan");
}

TEST(EnvelopeTest, TerminalStatesAreFinal) {
  RecommendationEnvelope e;
  EXPECT_EQ(e.status, EnvelopeStatus::pending);
  EXPECT_FALSE(transition(e, EnvelopeStatus::pending));
  EXPECT_TRUE(transition(e, EnvelopeStatus::accepted));
  EXPECT_FALSE(transition(e, EnvelopeStatus::rejected));
  EXPECT_EQ(e.status, EnvelopeStatus::accepted);

  RecommendationEnvelope r;
  EXPECT_TRUE(transition(r, EnvelopeStatus::superseded));
  EXPECT_FALSE(transition(r, EnvelopeStatus::accepted));
}

TEST(EventLogTest, WritesNdjsonFileSink) {
  const std::string path = testing::TempDir() + "/orch_log_test.ndjson";
  std::remove(path.c_str());
  EventLog log;
  log.open_file(path);
  log.append("alpha", {{"x", 1}});
  log.append("beta", {{"y", "z"}});

  std::ifstream in(path);
  std::string line;
  std::vector<json> lines;
  while (std::getline(in, line)) lines.push_back(json::parse(line));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].at("kind"), "alpha");
  EXPECT_EQ(lines[0].at("seq"), 0);
  EXPECT_EQ(lines[0].at("x"), 1);
  EXPECT_EQ(lines[1].at("kind"), "beta");
  EXPECT_EQ(lines[1].at("seq"), 1);
}

struct SinkCapture {
  std::mutex mu;
  std::vector<std::string> lines;

  std::function<void(const std::string&)> fn() {
    return [this](const std::string& line) {
      std::lock_guard lock(mu);
      lines.push_back(line);
    };
  }

  std::vector<std::string> snapshot() {
    std::lock_guard lock(mu);
    return lines;
  }
};

TEST(CoreTest, UpdateFlowEmitsCheckedRecommendation) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());

  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  EXPECT_TRUE(sink.snapshot().empty());

  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));
  const auto lines = sink.snapshot();
  ASSERT_EQ(lines.size(), 1u);

  const auto msg = wire::parse_line(lines[0]);
  const auto* rec = std::get_if<wire::RecommendationMsg>(&msg);
  ASSERT_NE(rec, nullptr);
  EXPECT_EQ(rec->target_uuid, "m");
  EXPECT_EQ(rec->recommendation_id, "rec-1");
  ASSERT_EQ(rec->waypoints.size(), 70u);
  EXPECT_EQ(rec->waypoints.front().timestamp_ms, 1100);
  EXPECT_EQ(rec->waypoints.back().timestamp_ms, 8000);
  for (const auto& w : rec->waypoints) {
    EXPECT_DOUBLE_EQ(w.acceleration_mps2, 0.0);
    EXPECT_DOUBLE_EQ(w.speed_mps, 10.0);
  }

  EXPECT_EQ(core.log().count("compute"), 1u);
  EXPECT_EQ(core.log().count("checker_pass"), 1u);
  EXPECT_EQ(core.log().count("emitted"), 1u);

  const auto envs = core.envelopes();
  ASSERT_EQ(envs.size(), 1u);
  EXPECT_EQ(envs[0].recommendation_id, "rec-1");
  EXPECT_EQ(envs[0].target_uuid, "m");
  EXPECT_EQ(envs[0].created_at_ms, 1000);
  EXPECT_EQ(envs[0].status, EnvelopeStatus::pending);
}

TEST(CoreTest, ShortSlotEmitsFollowerSlowdownPlan) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());

  core.handle_line(update_line(vs("p", 1, 0, 19, 14, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, 0, 8, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));

  const auto lines = sink.snapshot();
  ASSERT_EQ(lines.size(), 2u);

  const auto m_msg = wire::parse_line(lines[0]);
  const auto* m_rec = std::get_if<wire::RecommendationMsg>(&m_msg);
  ASSERT_NE(m_rec, nullptr);
  EXPECT_EQ(m_rec->target_uuid, "m");

  const auto f_msg = wire::parse_line(lines[1]);
  const auto* f_rec = std::get_if<wire::RecommendationMsg>(&f_msg);
  ASSERT_NE(f_rec, nullptr);
  EXPECT_EQ(f_rec->target_uuid, "f");
  ASSERT_FALSE(f_rec->waypoints.empty());
  for (const auto& w : f_rec->waypoints)
    EXPECT_DOUBLE_EQ(w.acceleration_mps2, -0.5);

  EXPECT_EQ(core.log().count("checker_pass"), 2u);
  EXPECT_EQ(core.log().count("emitted"), 2u);
}

TEST(CoreTest, StaleNeighboursEvictOnIngest) {
  OrchestratorCore core(test_config(0), hold_net());
  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));
  EXPECT_EQ(core.kb().size(), 3u);

  core.handle_line(update_line(vs("m", 2, 3.6, 50, 10, 5000)));
  const auto snap = core.kb().snapshot();
  ASSERT_EQ(snap.states.size(), 1u);
  EXPECT_EQ(snap.states[0].vehicle_id, "m");
  EXPECT_EQ(snap.states[0].timestamp_ms, 5000);
  // with the neighbours gone there is no scene, so nothing new is computed
  EXPECT_EQ(core.log().count("compute"), 1u);
  EXPECT_EQ(core.log().count("emitted"), 1u);
}

TEST(CoreTest, FeedbackLifecycle) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());
  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));
  ASSERT_EQ(sink.snapshot().size(), 1u);

  wire::ManeuverFeedback fb;
  fb.recommendation_id = "rec-1";
  fb.status = "accept";
  core.handle_line(wire::to_line(fb));
  auto envs = core.envelopes();
  ASSERT_EQ(envs.size(), 1u);
  EXPECT_EQ(envs[0].status, EnvelopeStatus::accepted);
  EXPECT_EQ(core.log().count("feedback"), 1u);

  // terminal: a second verdict is ignored
  fb.status = "reject";
  core.handle_line(wire::to_line(fb));
  envs = core.envelopes();
  EXPECT_EQ(envs[0].status, EnvelopeStatus::accepted);
  EXPECT_EQ(core.log().count("feedback_ignored"), 1u);
  EXPECT_EQ(core.log().count("recalc_scheduled"), 0u);

  fb.recommendation_id = "rec-404";
  fb.status = "accept";
  core.handle_line(wire::to_line(fb));
  EXPECT_EQ(core.log().count("feedback_unknown"), 1u);
}

TEST(CoreTest, RejectTriggersExactlyOneRecalculation) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());
  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));
  ASSERT_EQ(core.log().count("compute"), 1u);

  wire::ManeuverFeedback fb;
  fb.recommendation_id = "rec-1";
  fb.status = "reject";
  core.handle_line(wire::to_line(fb));
  EXPECT_EQ(core.log().count("recalc_scheduled"), 1u);
  EXPECT_EQ(core.log().count("compute"), 2u);
  ASSERT_EQ(sink.snapshot().size(), 2u);

  fb.recommendation_id = "rec-2";
  fb.status = "abort";
  core.handle_line(wire::to_line(fb));
  EXPECT_EQ(core.log().count("recalc_scheduled"), 2u);
  EXPECT_EQ(core.log().count("compute"), 3u);

  fb.recommendation_id = "rec-3";
  fb.status = "accept";
  core.handle_line(wire::to_line(fb));
  EXPECT_EQ(core.log().count("recalc_scheduled"), 2u);
  EXPECT_EQ(core.log().count("compute"), 3u);

  std::map<std::string, EnvelopeStatus> status;
  for (const auto& e : core.envelopes()) status[e.recommendation_id] = e.status;
  EXPECT_EQ(status.at("rec-1"), EnvelopeStatus::rejected);
  EXPECT_EQ(status.at("rec-2"), EnvelopeStatus::aborted);
  EXPECT_EQ(status.at("rec-3"), EnvelopeStatus::accepted);
  EXPECT_TRUE(compute_epoch_violations(core.log()).empty());
}

TEST(CoreTest, NewRecommendationSupersedesPendingOne) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());
  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 10, 10, 1000)));
  core.handle_line(update_line(vs("m", 2, 3.6, 11, 10, 1100)));

  EXPECT_EQ(core.log().count("superseded"), 1u);
  std::map<std::string, EnvelopeStatus> status;
  for (const auto& e : core.envelopes()) status[e.recommendation_id] = e.status;
  EXPECT_EQ(status.at("rec-1"), EnvelopeStatus::superseded);
  EXPECT_EQ(status.at("rec-2"), EnvelopeStatus::pending);
}

TEST(CoreTest, EmittedMatchesCheckerPassOneToOne) {
  OrchestratorCore core(test_config(0), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());
  core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
  for (int i = 0; i < 5; ++i)
    core.handle_line(update_line(vs("m", 2, 3.6, 10 + i, 10, 1000 + i * 100)));
  wire::ManeuverFeedback fb;
  fb.recommendation_id = "rec-5";
  fb.status = "reject";
  core.handle_line(wire::to_line(fb));

  std::multiset<std::string> passed, emitted;
  for (const auto& e : core.log().entries()) {
    if (e.kind == "checker_pass")
      passed.insert(e.detail.at("recommendation_id").get<std::string>());
    if (e.kind == "emitted")
      emitted.insert(e.detail.at("recommendation_id").get<std::string>());
  }
  EXPECT_FALSE(emitted.empty());
  EXPECT_EQ(passed, emitted);
  EXPECT_EQ(sink.snapshot().size(), emitted.size());
}

TEST(CoreTest, MalformedLinesAreRejectedAndCounted) {
  OrchestratorCore core(test_config(0), hold_net());
  core.handle_line("{this is not json");
  core.handle_line(R"({"type":"mystery"})");
  core.handle_line("[1,2,3]");
  auto bad = wire::from_state(vs("x", 1, 0, 0, 10, 1000), {0.0, 0.0});
  auto j = wire::to_json(bad);
  j["heading_deg"] = 400.0;
  core.handle_line(j.dump() + "\n");
  auto sub = wire::SubscriptionRequest{};
  core.handle_line(wire::to_line(sub));

  EXPECT_EQ(core.kb().size(), 0u);
  EXPECT_EQ(core.log().count("reject"), 5u);

  std::multiset<std::string> reasons;
  for (const auto& e : core.log().entries())
    if (e.kind == "reject")
      reasons.insert(e.detail.at("reason").get<std::string>());
  EXPECT_EQ(reasons.count("malformed_json"), 1u);
  EXPECT_EQ(reasons.count("unknown_type"), 2u);
  EXPECT_EQ(reasons.count("validation"), 1u);
  EXPECT_EQ(reasons.count("unexpected_type"), 1u);
}

TEST(CoreTest, FuzzLinesNeverCrashAndKbKeepsOnlyValidUpdates) {
  OrchestratorCore core(test_config(0), std::nullopt);

  std::vector<VehicleState> valid;
  valid.push_back(vs("pre1", 1, 0, 10, 10, 1000));
  valid.push_back(vs("pre2", 1, 0, 20, 11, 1000));
  valid.push_back(vs("pre3", 1, 0, 30, 12, 1000));
  for (const auto& s : valid) core.handle_line(update_line(s));
  ASSERT_EQ(core.kb().size(), 3u);

  Rng rng(7);
  const std::string base =
      wire::to_json(wire::from_state(vs("x", 1, 0, 0, 10, 1000), {0.0, 0.0}))
          .dump();
  for (int i = 0; i < 10000; ++i) {
    std::string line;
    const auto mode = rng.uniform_index(10);
    if (mode < 7) {
      const std::size_t len = 1 + rng.uniform_index(200);
      line.reserve(len);
      for (std::size_t b = 0; b < len; ++b) {
        char c = static_cast<char>(rng.uniform_index(256));
        if (c == '\n') c = ' ';
        line.push_back(c);
      }
    } else if (mode == 7) {
      line = base.substr(0, base.size() / 2 + rng.uniform_index(10));
    } else if (mode == 8) {
      json j = json::parse(base);
      j.erase("uuid");
      line = j.dump();
    } else {
      json j = json::parse(base);
      j["heading_deg"] = 360.0 + static_cast<double>(rng.uniform_index(100));
      line = j.dump();
    }
    core.handle_line(line);
  }

  valid.push_back(vs("post1", 1, 0, 40, 13, 2000));
  valid.push_back(vs("pre1", 1, 0, 15, 14, 2000));  // refresh an old entry
  core.handle_line(update_line(valid[3]));
  core.handle_line(update_line(valid[4]));

  EXPECT_EQ(core.log().count("reject"), 10000u);

  std::map<std::string, VehicleState> oracle;
  for (const auto& s : valid) {
    auto it = oracle.find(s.vehicle_id);
    if (it == oracle.end() || it->second.timestamp_ms < s.timestamp_ms)
      oracle.insert_or_assign(s.vehicle_id, s);
  }
  const auto snap = core.kb().snapshot();
  ASSERT_EQ(snap.states.size(), oracle.size());
  for (const auto& s : snap.states) {
    const auto& want = oracle.at(s.vehicle_id);
    EXPECT_EQ(s.timestamp_ms, want.timestamp_ms) << s.vehicle_id;
    EXPECT_DOUBLE_EQ(s.speed_mps, want.speed_mps) << s.vehicle_id;
  }
}

TEST(CoreTest, RapidUpdatesCoalesceWithMonotoneSnapshots) {
  OrchestratorCore core(test_config(1), hold_net());
  SinkCapture sink;
  core.set_sink(sink.fn());
  core.handle_line(update_line(vs("p", 1, 0, 300, 10, 1000)));
  core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));

  for (int i = 0; i < 100; ++i)
    core.handle_line(update_line(vs("m", 2, 3.6, 10 + i * 0.1, 10, 1000 + i * 10)));
  const auto epoch_after_last = core.kb().epoch();
  core.flush();

  std::size_t computes = 0;
  std::uint64_t max_epoch = 0;
  for (const auto& e : core.log().entries()) {
    if (e.kind != "compute") continue;
    ++computes;
    max_epoch = std::max(max_epoch, e.detail.at("epoch").get<std::uint64_t>());
  }
  EXPECT_GE(computes, 1u);
  EXPECT_LT(computes, 100u);  // back-to-back triggers must coalesce
  EXPECT_GE(max_epoch, epoch_after_last);  // newest state was computed
  EXPECT_TRUE(compute_epoch_violations(core.log()).empty());
  core.stop();
}

TEST(CoreTest, WorkerCountDoesNotChangeEmissions) {
  std::vector<std::vector<std::string>> per_worker_lines;
  for (const int workers : {0, 1, 4}) {
    OrchestratorCore core(test_config(workers), hold_net());
    SinkCapture sink;
    core.set_sink(sink.fn());
    core.handle_line(update_line(vs("p", 1, 0, 30, 10, 1000)));
    core.flush();
    core.handle_line(update_line(vs("f", 1, 0, -10, 10, 1000)));
    core.flush();
    for (int i = 0; i < 6; ++i) {
      core.handle_line(
          update_line(vs("m", 2, 3.6, 10 + i, 10, 1000 + i * 100)));
      core.flush();
    }
    core.stop();
    per_worker_lines.push_back(sink.snapshot());
  }
  ASSERT_EQ(per_worker_lines[0].size(), 6u);
  EXPECT_EQ(per_worker_lines[0], per_worker_lines[1]);
  EXPECT_EQ(per_worker_lines[0], per_worker_lines[2]);
}

struct TestClient {
  int fd{-1};

  explicit TestClient(int port) {
    fd = net::connect_to("127.0.0.1", port);
    timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~TestClient() {
    if (fd >= 0) ::close(fd);
  }
};

TEST(ServerTest, GreetsThenRoundTripsRecommendation) {
  OrchestratorCore core(test_config(1), hold_net());
  OrchestratorServer server(core, "127.0.0.1", 0);
  ASSERT_GT(server.port(), 0);

  TestClient client(server.port());
  net::LineReader reader(client.fd, wire::kMaxLineBytes);

  const auto greeting = reader.next_line();
  ASSERT_TRUE(greeting.has_value());
  const auto hello = wire::parse_line(*greeting);
  const auto* sub = std::get_if<wire::SubscriptionRequest>(&hello);
  ASSERT_NE(sub, nullptr);
  EXPECT_DOUBLE_EQ(sub->boundary.max_lat, 0.5);

  ASSERT_TRUE(net::send_all(client.fd, update_line(vs("p", 1, 0, 30, 10, 1000))));
  ASSERT_TRUE(net::send_all(client.fd, update_line(vs("f", 1, 0, -10, 10, 1000))));
  ASSERT_TRUE(net::send_all(client.fd, update_line(vs("m", 2, 3.6, 10, 10, 1000))));

  const auto rec_line = reader.next_line();
  ASSERT_TRUE(rec_line.has_value());
  const auto msg = wire::parse_line(*rec_line);
  const auto* rec = std::get_if<wire::RecommendationMsg>(&msg);
  ASSERT_NE(rec, nullptr);
  EXPECT_EQ(rec->target_uuid, "m");
  EXPECT_EQ(rec->waypoints.size(), 70u);

  wire::ManeuverFeedback fb;
  fb.recommendation_id = rec->recommendation_id;
  fb.status = "accept";
  ASSERT_TRUE(net::send_all(client.fd, wire::to_line(fb)));
  for (int i = 0; i < 500; ++i) {
    if (core.log().count("feedback") > 0) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  core.flush();
  const auto envs = core.envelopes();
  ASSERT_EQ(envs.size(), 1u);
  EXPECT_EQ(envs[0].status, EnvelopeStatus::accepted);

  server.stop();
  core.stop();
}

TEST(ServerTest, OversizedLineDropsOnlyThatConnection) {
  OrchestratorCore core(test_config(1), hold_net());
  OrchestratorServer server(core, "127.0.0.1", 0);

  {
    TestClient client(server.port());
    net::LineReader reader(client.fd, wire::kMaxLineBytes);
    ASSERT_TRUE(reader.next_line().has_value());

    const std::string big(wire::kMaxLineBytes + 4096, 'a');
    net::send_all(client.fd, big + "\n");

    char buf[256];
    while (::recv(client.fd, buf, sizeof buf, 0) > 0) {
    }
  }
  for (int i = 0; i < 1000 && server.connections() > 0; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  EXPECT_EQ(server.connections(), 0u);
  EXPECT_EQ(core.log().count("connection_error"), 1u);
  EXPECT_EQ(core.kb().size(), 0u);

  // the service keeps serving new peers
  TestClient again(server.port());
  net::LineReader reader(again.fd, wire::kMaxLineBytes);
  ASSERT_TRUE(reader.next_line().has_value());
  ASSERT_TRUE(net::send_all(again.fd, update_line(vs("p", 1, 0, 30, 10, 1000))));
  for (int i = 0; i < 1000 && core.kb().size() == 0; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  EXPECT_EQ(core.kb().size(), 1u);

  server.stop();
  core.stop();
}

TEST(ServerTest, DialsOutToGatewayAndServesIt) {
  OrchestratorCore core(test_config(1), hold_net());
  OrchestratorServer server(core, "127.0.0.1", 0);

  const int gw_listen = net::listen_on("127.0.0.1", 0);
  const int gw_port = net::bound_port(gw_listen);
  server.connect_gateway("127.0.0.1", gw_port);
  const int gw_fd = ::accept(gw_listen, nullptr, nullptr);
  ASSERT_GE(gw_fd, 0);
  timeval tv{5, 0};
  ::setsockopt(gw_fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);

  net::LineReader reader(gw_fd, wire::kMaxLineBytes);
  const auto greeting = reader.next_line();
  ASSERT_TRUE(greeting.has_value());
  ASSERT_TRUE(std::holds_alternative<wire::SubscriptionRequest>(
      wire::parse_line(*greeting)));

  ASSERT_TRUE(net::send_all(gw_fd, update_line(vs("p", 1, 0, 30, 10, 1000))));
  ASSERT_TRUE(net::send_all(gw_fd, update_line(vs("f", 1, 0, -10, 10, 1000))));
  ASSERT_TRUE(net::send_all(gw_fd, update_line(vs("m", 2, 3.6, 10, 10, 1000))));

  const auto rec_line = reader.next_line();
  ASSERT_TRUE(rec_line.has_value());
  EXPECT_TRUE(std::holds_alternative<wire::RecommendationMsg>(
      wire::parse_line(*rec_line)));

  ::close(gw_fd);
  ::close(gw_listen);
  server.stop();
  core.stop();
}

}  // namespace
}  // namespace lmo::orch
