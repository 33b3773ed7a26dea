#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "rehab/analytics.hpp"
#include "rehab/error.hpp"
#include "rehab/session_runner.hpp"
#include "test_support.hpp"

using namespace rehab;

namespace {

SessionLog constructed_log(const std::vector<bool>& outcomes) {
  SessionLog log;
  log.header.grid = default_grid(GridLayout::Grid3x3);
  std::int64_t t = 0;
  int score = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const int r = static_cast<int>(i);
    log.records.push_back({t, GameEventKind{event::TargetShown{r, {0, 0}, {0, 0}}}});
    t += 10000;
    log.records.push_back({t, GameEventKind{event::Resolved{r, outcomes[i], {0, 0}, std::nullopt}}});
    if (outcomes[i]) log.records.push_back({t, GameEventKind{event::ScoreChanged{++score}}});
    t += 2000;
  }
  return log;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

SessionLog standing_session(const std::map<JointId, Vec3>& offsets, double seconds) {
  GameConfig c;
  c.length = 1;
  MovementScript s;
  s.steps.push_back({0.0, {1, 1}, 0.0, 0.01, false});
  s.posture_offsets = offsets;
  s.duration_s = seconds;
  return simulate(c, s).log;
}

}  // namespace

TEST_SUITE("analytics") {

TEST_CASE("five resolved, three correct") {
  const auto s = compute_stats(constructed_log({true, false, true, false, true}));
  CHECK(s.rounds_or_waves == 5);
  CHECK(s.presented == 5);
  CHECK(s.correct == 3);
  CHECK(s.missed == 2);
  CHECK(s.hit_rate == 0.6);
  CHECK(s.final_score == 3);
}

TEST_CASE("nothing resolved") {
  const auto s = compute_stats(constructed_log({}));
  CHECK(s.hit_rate == 0.0);
  CHECK(s.shift_latencies_s.empty());
  CHECK_FALSE(s.mean_shift_latency_s);
  CHECK(s.end_reason == "incomplete");
}

TEST_CASE("duration is last minus first record time") {
  auto log = constructed_log({true, true});
  log.records.insert(log.records.begin(), LogRecord{0, Marker{"start", "command", nullptr}});
  for (auto& r : log.records) r.t_ms += 700;
  const auto s = compute_stats(log);
  CHECK(s.duration_s == (log.records.back().t_ms - 700) / 1000.0);
}

TEST_CASE("shift latency from target shown to first frame on the target") {
  SessionLog log;
  log.header.grid = default_grid(GridLayout::Grid3x3);
  const Vec3 target = log.header.grid.cell_center({2, 2});
  const Vec3 elsewhere = log.header.grid.cell_center({0, 0});
  log.records.push_back({0, GameEventKind{event::TargetShown{0, {2, 2}, {2, 2}}}});
  for (std::int64_t k = 1; k <= 90; ++k) {
    const std::int64_t t = tick_to_ms(k);
    log.records.push_back(LogRecord::from_frame(synthetic_skeleton(k < 75 ? elsewhere : target, t)));
  }
  log.records.push_back({3000, GameEventKind{event::Resolved{0, true, {2, 2}, Cell{2, 2}}}});
  const auto s = compute_stats(log);
  REQUIRE(s.shift_latencies_s.size() == 1);
  CHECK(s.shift_latencies_s[0] == 2.5);
  CHECK(s.mean_shift_latency_s == 2.5);
  CHECK(s.median_shift_latency_s == 2.5);
}

TEST_CASE("stats json round trip") {
  GameConfig c;
  c.seed = 8;
  c.length = 3;
  std::mt19937_64 rng(8);
  const auto st = simulate(c, testing::random_script(GridLayout::Grid3x3, rng, 60.0)).stats;
  CHECK(stats_from_json(stats_to_json(st)) == st);
}

TEST_CASE("upright session has straight knees") {
  const auto trace = compute_posture_trace(standing_session({}, 5.0));
  REQUIRE(!trace.samples.empty());
  CHECK(std::abs(trace.summary.at("knee_l_deg").mean - 180.0) < 1e-6);
  CHECK(std::abs(trace.summary.at("knee_r_deg").mean - 180.0) < 1e-6);
  CHECK(std::abs(trace.summary.at("hip_tilt_deg").mean) < 1e-6);
}

TEST_CASE("lower left knee and hip tilt the pelvis towards the left") {
  // shorter left leg: hip and knee both 4 cm lower
  const std::map<JointId, Vec3> defect = {{JointId::HipL, {0, -0.04, 0}}, {JointId::KneeL, {0, -0.04, 0}}};
  const auto log = standing_session(defect, 5.0);
  const auto trace = compute_posture_trace(log);
  // hips 0.2 m apart; the right one is 0.04 m higher
  const double expected = std::atan2(0.04, 0.2) * 180.0 / 3.14159265358979323846;
  CHECK(trace.summary.at("hip_tilt_deg").mean > 0.0);
  CHECK(std::abs(trace.summary.at("hip_tilt_deg").mean - expected) < 0.05);
  std::size_t frames = 0;
  for (const auto& r : log.records) frames += r.is_frame();
  CHECK(trace.samples.size() + trace.skipped == frames);
}

TEST_CASE("degenerate frames are skipped but counted") {
  SessionLog log;
  log.header.grid = default_grid(GridLayout::Grid3x3);
  auto good = synthetic_skeleton({0, 0, 2.5}, 0);
  auto bad = synthetic_skeleton({0, 0, 2.5}, 33);
  bad[JointId::KneeR] = bad[JointId::HipR];
  log.records.push_back(LogRecord::from_frame(good));
  log.records.push_back(LogRecord::from_frame(bad));
  const auto trace = compute_posture_trace(log);
  CHECK(trace.samples.size() == 1);
  CHECK(trace.skipped == 1);
}

TEST_CASE("iso weeks") {
  CHECK(iso_week_of("2026-10-18T09:00:00Z") == std::pair{2026, 42});
  CHECK(iso_week_of("2021-01-03T00:00:00Z") == std::pair{2020, 53});
  CHECK(iso_week_of("2024-12-30T00:00:00Z") == std::pair{2025, 1});
}

TEST_CASE("trends") {
  CHECK(profile_trends({}).weeks.empty());
  CHECK_FALSE(profile_trends({}).latency_delta_s);

  std::vector<SessionRef> refs;
  const double lat[3] = {5.0, 3.0, 2.0};
  const char* days[3] = {"2026-10-12T10:00:00Z", "2026-10-14T10:00:00Z", "2026-10-18T10:00:00Z"};
  for (int i = 0; i < 3; ++i) {
    SessionRef r;
    r.id = "f06." + std::to_string(i);
    r.started_at = days[i];
    r.stats.duration_s = 120.0;
    r.stats.final_score = i + 4;
    r.stats.mean_shift_latency_s = lat[i];
    refs.push_back(r);
  }
  const auto t = profile_trends(refs);
  REQUIRE(t.weeks.size() == 1);
  CHECK(t.weeks[0].sessions == 3);
  CHECK(t.weeks[0].minutes == 6.0);
  CHECK(t.total_minutes == 6.0);
  CHECK(t.scores == std::vector<int>{4, 5, 6});
  REQUIRE(t.latency_delta_s);
  CHECK(*t.latency_delta_s < 0.0);
  CHECK(*t.latency_delta_s == -3.0);
}

TEST_CASE("csv export") {
  PostureTrace empty;
  const std::string header_only = trace_to_csv(empty);
  CHECK(split(header_only, "\r\n").size() == 2);  // header + trailing empty piece
  CHECK(header_only.find("t_ms,shoulder_tilt_deg") == 0);

  const auto log = standing_session({{JointId::KneeL, {0.02, 0, 0.03}}}, 3.0);
  const auto trace = compute_posture_trace(log);
  const auto dir = testing::temp_dir("csv");
  export_csv(trace, dir / "trace.csv");
  std::ifstream in(dir / "trace.csv", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  auto lines = split(ss.str(), "\r\n");
  REQUIRE(lines.back().empty());
  lines.pop_back();
  CHECK(lines.size() == trace.samples.size() + 1);
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto cols = split(lines[i + 1], ",");
    REQUIRE(cols.size() == 15);
    const auto& m = trace.samples[i].metrics;
    CHECK(std::stoll(cols[0]) == trace.samples[i].t_ms);
    CHECK(std::abs(std::stod(cols[1]) - *m.shoulder_tilt_deg) <= 0.5e-4 + 1e-12);
    CHECK(std::abs(std::stod(cols[3]) - *m.knee_l_deg) <= 0.5e-4 + 1e-12);
    CHECK(std::abs(std::stod(cols[6]) - *m.ankle_r_deg) <= 0.5e-4 + 1e-12);
    CHECK(std::abs(std::stod(cols[11]) - m.depth_offsets.at(JointId::KneeL)) <= 0.5e-4 + 1e-12);
  }

  export_csv(compute_stats(log), dir / "stats.csv");
  std::ifstream sin(dir / "stats.csv");
  std::string first;
  std::getline(sin, first);
  CHECK(first.rfind("duration_s,frames", 0) == 0);
  CHECK_THROWS_AS(export_csv(trace, "/nonexistent-dir/x.csv"), Error);
}

}
