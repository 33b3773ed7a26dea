#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "rehab/calibration.hpp"
#include "rehab/error.hpp"
#include "rehab/input_source.hpp"
#include "rehab/serialization.hpp"
#include "rehab/session_runner.hpp"
#include "test_support.hpp"

using namespace rehab;

namespace {

int connect_local(int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return -1;
  }
  return fd;
}

void send_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const auto n = ::send(fd, s.data() + off, s.size() - off, 0);
    if (n <= 0) return;
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

TEST_SUITE("input_source") {

TEST_CASE("standing still without noise sits on the cell center") {
  const GridFrame g = default_grid(GridLayout::Grid3x3);
  MovementScript s;
  s.steps.push_back({0.0, {1, 1}, 0.0, 0.0, false});
  ScriptedSource src(s, g, 1);
  for (std::int64_t k = 0; k < 300; ++k) {
    const auto f = src.poll(tick_to_ms(k));
    REQUIRE(f);
    CHECK(player_floor_point(*f) == g.cell_center({1, 1}));
    CHECK(locate_cell(g, player_floor_point(*f)) == Cell{1, 1});
  }
  CHECK_FALSE(src.exhausted());
}

TEST_CASE("transit midpoint") {
  const GridFrame g = default_grid(GridLayout::Grid3x3);
  const double sigma = 0.01;
  MovementScript s;
  s.steps.push_back({0.0, {0, 0}, 0.0, sigma, false});
  s.steps.push_back({0.5, {0, 2}, 2.0, sigma, false});
  ScriptedSource src(s, g, 2);
  std::optional<SkeletonFrame> at;
  for (std::int64_t k = 0; k <= 45; ++k) at = src.poll(tick_to_ms(k));  // 45 ticks = 1.5 s
  const Vec3 mid = 0.5 * (g.cell_center({0, 0}) + g.cell_center({0, 2}));
  const Vec3 p = player_floor_point(*at);
  CHECK(std::abs(p.x - mid.x) <= 3 * sigma + 1e-4);
  CHECK(std::abs(p.z - mid.z) <= 3 * sigma + 1e-4);
  const Vec3 planned = src.planned_floor_point(1.5);
  CHECK((planned - mid).norm() < 1e-12);
}

TEST_CASE("scripted source ends at the script duration") {
  MovementScript s;
  s.steps.push_back({0.0, {1, 1}, 0.0, 0.0, false});
  s.duration_s = 1.0;
  ScriptedSource src(s, default_grid(GridLayout::Grid3x3), 0);
  int frames = 0;
  while (true) {
    try {
      src.next_frame();
      ++frames;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EndOfStream);
      break;
    }
  }
  CHECK(frames == 31);
}

TEST_CASE("script validation and json") {
  MovementScript s;
  CHECK_THROWS_AS(s.validate(), Error);
  s.steps.push_back({0.0, {1, 1}, 0.0, 0.0, false});
  s.steps.push_back({0.0, {1, 2}, 0.0, 0.0, false});
  CHECK_THROWS_AS(s.validate(), Error);
  s.steps[1].time_s = 2.0;
  s.steps[1].hands_up = true;
  s.posture_offsets[JointId::HipL] = {0, -0.05, 0};
  s.duration_s = 9.0;
  const MovementScript back = script_from_json(script_to_json(s));
  CHECK(script_to_json(back) == script_to_json(s));
  MovementScript bad = s;
  bad.steps[0].cell = {3, 0};
  CHECK_THROWS_AS(ScriptedSource(bad, default_grid(GridLayout::Grid3x3), 0), Error);
}

TEST_CASE("replay at speed 1 keeps the recorded timestamps") {
  GameConfig c;
  c.length = 2;
  std::mt19937_64 rng(4);
  const auto log = simulate(c, testing::random_script(GridLayout::Grid3x3, rng, 30.0)).log;
  ReplaySource src(log, 1.0);
  std::vector<SkeletonFrame> recorded;
  for (const auto& r : log.records) {
    if (r.is_frame()) recorded.push_back(r.frame());
  }
  std::size_t i = 0;
  for (std::int64_t k = 0; !src.exhausted(); ++k) {
    if (auto f = src.poll(tick_to_ms(k))) {
      REQUIRE(i < recorded.size());
      CHECK(*f == recorded[i]);
      ++i;
    }
  }
  CHECK(i == recorded.size());
  CHECK_THROWS_AS(ReplaySource(log, 0.0), Error);
}

TEST_CASE("replay at double speed skips to newer frames") {
  GameConfig c;
  c.length = 1;
  MovementScript s;
  s.steps.push_back({0.0, {1, 1}, 0.0, 0.0, false});
  s.duration_s = 4.0;
  const auto log = simulate(c, s).log;
  ReplaySource src(log, 2.0);
  int yielded = 0;
  for (std::int64_t k = 0; !src.exhausted() && k < 1000; ++k) yielded += src.poll(tick_to_ms(k)).has_value();
  CHECK(yielded > 55);
  CHECK(yielded < 65);
}

TEST_CASE("virtual moves") {
  const GridFrame g = default_grid(GridLayout::Grid3x3);
  VirtualSource v(g);
  v.virtual_move({2, 2});
  CHECK(locate_cell(g, player_floor_point(*v.poll(0))) == Cell{2, 2});
  try {
    v.virtual_move({3, 0});
    FAIL("expected InvalidCell");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidCell);
  }
  CHECK(v.current_cell() == Cell{2, 2});
  // several moves between two frames: the last one wins
  v.virtual_move({0, 0});
  v.virtual_move({1, 2});
  v.virtual_move({0, 1});
  CHECK(locate_cell(g, player_floor_point(*v.poll(33))) == Cell{0, 1});
}

TEST_CASE("virtual moves from another thread") {
  const GridFrame g = default_grid(GridLayout::Grid3x3);
  VirtualSource v(g);
  std::thread t([&] {
    for (int i = 0; i < 1000; ++i) v.virtual_move(layout_cells(GridLayout::Grid3x3)[i % 9]);
    v.virtual_move({2, 0});
  });
  for (int i = 0; i < 200; ++i) {
    const auto f = v.poll(i);
    CHECK(locate_cell(g, player_floor_point(*f)));
  }
  t.join();
  CHECK(locate_cell(g, player_floor_point(*v.poll(0))) == Cell{2, 0});
}

TEST_CASE("source descriptors") {
  CHECK(parse_source_descriptor("virtual").kind == SourceKind::Virtual);
  const auto r = parse_source_descriptor("replay:/tmp/x.session.jsonl@2.5");
  CHECK(r.kind == SourceKind::ReplayFile);
  CHECK(r.path == "/tmp/x.session.jsonl");
  CHECK(r.speed_factor == 2.5);
  const auto s = parse_source_descriptor("scripted:demo.json");
  CHECK(s.kind == SourceKind::Scripted);
  CHECK(s.path == "demo.json");
  CHECK(parse_source_descriptor("network:127.0.0.1:9000").endpoint == "127.0.0.1:9000");
  for (const char* bad : {"camera", "replay:", "replay:x@0", "network:nohost", "scripted"}) {
    CHECK_THROWS_AS(parse_source_descriptor(bad), Error);
  }
}

TEST_CASE("network source reads frame lines over tcp") {
  NetworkSource net("127.0.0.1:0", 8);
  REQUIRE(net.port() > 0);
  const int fd = connect_local(net.port());
  REQUIRE(fd >= 0);
  const SkeletonFrame f = synthetic_skeleton({0.25, 0, 2.4}, 777);
  send_all(fd, frame_to_line(f) + "\nnot json\n" + frame_to_line(f) + "\n");
  std::optional<SkeletonFrame> got;
  for (int i = 0; i < 200 && !got; ++i) {
    got = net.poll(1000);
    if (!got) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(got);
  CHECK(got->t_ms == 1000);  // restamped
  CHECK(got->joints == f.joints);
  for (int i = 0; i < 200 && net.malformed_count() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  CHECK(net.malformed_count() == 1);

  // overflow drops the oldest
  std::string burst;
  for (int i = 0; i < 20; ++i) burst += frame_to_line(synthetic_skeleton({0, 0, 2.0 + i * 0.01}, i)) + "\n";
  send_all(fd, burst);
  for (int i = 0; i < 200 && net.dropped_count() < 12; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  CHECK(net.dropped_count() >= 12);
  ::close(fd);
}

}
