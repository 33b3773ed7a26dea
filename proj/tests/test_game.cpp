#include <doctest.h>

#include "rehab/error.hpp"
#include "rehab/game.hpp"
#include "rehab/serialization.hpp"
#include "rehab/session_runner.hpp"
#include "test_support.hpp"

using namespace rehab;

namespace {

template <typename T>
std::vector<T> events_of(const std::vector<GameEvent>& events) {
  std::vector<T> out;
  for (const auto& e : events) {
    if (const auto* p = std::get_if<T>(&e.kind)) out.push_back(*p);
  }
  return out;
}

// Runs an engine with a virtual player that stands on `choose(target)` each tick.
std::vector<GameEvent> run_virtual(GameEngine& engine, auto&& choose, std::int64_t max_ticks = 100000) {
  std::vector<GameEvent> all;
  engine.start();
  for (std::int64_t k = 0; k < max_ticks && engine.state().phase != Phase::Finished; ++k) {
    const auto& st = engine.state();
    std::optional<Cell> target = st.current_target;
    if (!target && !st.active_waves.empty()) target = Cell{0, st.active_waves.front().wave.safe_lane};
    TickInput in{tick_to_ms(k), std::nullopt, choose(target)};
    for (auto& e : engine.tick(in)) all.push_back(e);
  }
  return all;
}

GameConfig grid_config() {
  GameConfig c;
  c.mechanic = Mechanic::GridDance;
  c.layout = GridLayout::Grid3x3;
  return c;
}

GameConfig runner_config() {
  GameConfig c;
  c.mechanic = Mechanic::Runner;
  c.layout = GridLayout::Line3;
  return c;
}

}  // namespace

TEST_SUITE("game") {

TEST_CASE("seconds to ticks") {
  CHECK(seconds_to_ticks(10.0) == 300);
  CHECK(seconds_to_ticks(12.5) == 375);
  CHECK(seconds_to_ticks(0.001) == 1);
  CHECK(tick_to_ms(1) == 33);
  CHECK(tick_to_ms(30) == 1000);
  for (std::int64_t k = 0; k < 1000; ++k) CHECK(ms_to_tick(tick_to_ms(k)) == k);
}

TEST_CASE("hit on target at countdown zero scores exactly one") {
  GameConfig c = grid_config();
  c.length = 1;
  GameEngine e(c, default_grid(GridLayout::Grid3x3));
  const auto events = run_virtual(e, [](std::optional<Cell> t) { return t.value_or(Cell{1, 1}); });
  const auto resolved = events_of<event::Resolved>(events);
  REQUIRE(resolved.size() == 1);
  CHECK(resolved[0].correct);
  CHECK(e.state().score == 1);
  CHECK(events_of<event::ScoreChanged>(events).size() == 1);
  // resolved exactly at the deadline tick
  for (const auto& ev : events) {
    if (std::holds_alternative<event::Resolved>(ev.kind)) CHECK(ev.t_ms == tick_to_ms(300));
  }
}

TEST_CASE("wrong cell: score unchanged, one life lost") {
  GameConfig c = grid_config();
  c.length = 2;
  c.lives = 3;
  GameEngine e(c, default_grid(GridLayout::Grid3x3));
  std::vector<GameEvent> events;
  e.start();
  for (std::int64_t k = 0; k <= 300; ++k) {
    const Cell wrong = testing::other_cell(GridLayout::Grid3x3, e.state().current_target.value_or(Cell{1, 1}));
    for (auto& ev : e.tick({tick_to_ms(k), std::nullopt, wrong})) events.push_back(ev);
  }
  CHECK(e.state().score == 0);
  CHECK(e.state().lives_remaining == 2);
  const auto lost = events_of<event::LifeLost>(events);
  REQUIRE(lost.size() == 1);
  CHECK(lost[0].lives_remaining == 2);
  CHECK(events_of<event::ScoreChanged>(events).empty());
}

TEST_CASE("five rounds hit miss hit hit miss score three") {
  GameConfig c = grid_config();
  c.length = 5;
  c.seed = 77;
  const std::vector<bool> plan = {true, false, true, true, false};
  const auto result = simulate(c, testing::plan_script(c, plan, 0.01));
  const auto events = result.log.events();
  const auto resolved = events_of<event::Resolved>(events);
  REQUIRE(resolved.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(resolved[i].correct == plan[i]);
  CHECK(result.stats.final_score == 3);
  CHECK(result.stats.end_reason == "completed");
}

TEST_CASE("resolution event order") {
  GameConfig c = grid_config();
  c.length = 1;
  c.lives = 1;
  GameEngine e(c, default_grid(GridLayout::Grid3x3));
  const auto events = run_virtual(e, [](std::optional<Cell> t) {
    return testing::other_cell(GridLayout::Grid3x3, t.value_or(Cell{1, 1}));
  });
  std::vector<std::string> names;
  for (const auto& ev : events) names.emplace_back(event_type_name(ev.kind));
  CHECK(names == std::vector<std::string>{"target_shown", "resolved", "feedback_cue", "life_lost", "game_ended"});
  CHECK(e.state().end_reason == EndReason::LivesExhausted);
}

TEST_CASE("adaptive update rules") {
  AdaptivePolicy p;
  GameState s;
  s.effective_time_s = 10.0;
  CHECK_FALSE(adaptive_update(s, p, 10.0, false).eased);
  CHECK_FALSE(adaptive_update(s, p, 10.0, false).eased);
  const auto third = adaptive_update(s, p, 10.0, false);
  REQUIRE(third.eased);
  CHECK(third.eased->new_time_s == 12.5);
  CHECK_FALSE(third.stop);

  GameState r;
  r.effective_time_s = 10.0;
  adaptive_update(r, p, 10.0, false);
  adaptive_update(r, p, 10.0, false);
  const auto hit = adaptive_update(r, p, 10.0, true);
  CHECK(r.consecutive_misses == 0);
  CHECK_FALSE(hit.eased);
  CHECK(r.effective_time_s == 10.0);

  GameState q;
  q.effective_time_s = 10.0;
  int eased = 0;
  bool stop = false;
  for (int i = 1; i <= 6; ++i) {
    const auto o = adaptive_update(q, p, 10.0, false);
    if (o.eased) {
      ++eased;
      CHECK(i == 3);
    }
    if (o.stop) {
      CHECK(i == 6);
      stop = true;
    }
  }
  CHECK(eased == 1);
  CHECK(stop);
}

TEST_CASE("easing is capped") {
  AdaptivePolicy p;
  p.ease_factor = 3.0;
  p.stop_after_misses = 100;
  GameState s;
  s.effective_time_s = 10.0;
  for (int i = 0; i < 3; ++i) adaptive_update(s, p, 10.0, false);
  CHECK(s.effective_time_s == 20.0);
}

TEST_CASE("screen cell mapping") {
  CHECK(screen_cell({1, 0}, ViewMode::Mirrored) == Cell{1, 2});
  for (int r = 0; r < 3; ++r) CHECK(screen_cell({r, 1}, ViewMode::Mirrored) == Cell{r, 1});
  for (const Cell c : layout_cells(GridLayout::Grid3x3)) {
    CHECK(screen_cell(c, ViewMode::ThirdPerson) == c);
    CHECK(screen_cell(screen_cell(c, ViewMode::Mirrored), ViewMode::Mirrored) == c);
    CHECK(screen_cell(screen_cell(c, ViewMode::ThirdPerson), ViewMode::ThirdPerson) == c);
  }
}

TEST_CASE("layout mismatch") {
  try {
    GameEngine e(grid_config(), default_grid(GridLayout::Line3));
    FAIL("expected LayoutMismatch");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::LayoutMismatch);
  }
  GameConfig bad = runner_config();
  bad.layout = GridLayout::Grid3x3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("config validation") {
  GameConfig c;
  c.lives = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.length = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.shift_time_s = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("pause and resume keep score and tick") {
  GameConfig c = grid_config();
  c.length = 3;
  GameEngine e(c, default_grid(GridLayout::Grid3x3));
  e.start();
  std::int64_t k = 0;
  auto step = [&](int n) {
    for (int i = 0; i < n; ++i, ++k) e.tick({tick_to_ms(k), std::nullopt, e.state().current_target.value_or(Cell{1, 1})});
  };
  step(310);
  CHECK(e.state().score == 1);
  const auto tick_before = e.state().tick;
  e.pause();
  step(500);  // ignored while paused
  CHECK(e.state().tick == tick_before);
  CHECK(e.state().score == 1);
  e.resume();
  step(10);
  CHECK(e.state().tick == tick_before + 10);
  CHECK(e.state().score == 1);
  CHECK_THROWS_AS(e.resume(), Error);
}

TEST_CASE("tick before start is refused") {
  GameEngine e(grid_config(), default_grid(GridLayout::Grid3x3));
  CHECK_THROWS_AS(e.tick({0, std::nullopt, Cell{1, 1}}), Error);
}

TEST_CASE("sensor gap pauses and the next frame resumes") {
  GameEngine e(grid_config(), default_grid(GridLayout::Grid3x3));
  e.start();
  std::int64_t k = 0;
  e.tick({tick_to_ms(k++), std::nullopt, Cell{1, 1}});
  for (int i = 0; i < GameEngine::kSensorGapTicks; ++i) e.tick({tick_to_ms(k++), std::nullopt, std::nullopt});
  CHECK(e.state().phase == Phase::Running);
  e.tick({tick_to_ms(k++), std::nullopt, std::nullopt});
  CHECK(e.state().phase == Phase::Paused);
  CHECK(e.state().pause_reason == PauseReason::SensorGap);
  const auto frozen = e.state().tick;
  e.tick({tick_to_ms(k++), std::nullopt, std::nullopt});
  CHECK(e.state().tick == frozen);
  e.tick({tick_to_ms(k++), std::nullopt, Cell{0, 0}});
  CHECK(e.state().phase == Phase::Running);
  CHECK(e.state().tick == frozen + 1);
}

TEST_CASE("abort ends the game") {
  GameEngine e(grid_config(), default_grid(GridLayout::Grid3x3));
  e.start();
  const auto ev = e.abort(500);
  REQUIRE(ev.size() == 1);
  CHECK(std::get<event::GameEnded>(ev[0].kind).reason == EndReason::TherapistAbort);
  CHECK(ev[0].t_ms == 500);
  CHECK_THROWS_AS(e.abort(600), Error);
}

TEST_CASE("runner: waves spawn on the interval and score on survival") {
  GameConfig c = runner_config();
  c.length = 5;
  c.seed = 7;
  GameEngine e(c, default_grid(GridLayout::Line3));
  std::vector<GameEvent> events;
  e.start();
  for (std::int64_t k = 0; e.state().phase != Phase::Finished; ++k) {
    const auto& waves = e.state().active_waves;
    const Cell stand = waves.empty() ? Cell{0, 1} : Cell{0, waves.front().wave.safe_lane};
    for (auto& ev : e.tick({tick_to_ms(k), std::nullopt, stand})) events.push_back(ev);
  }
  const auto spawned = events_of<event::WaveSpawned>(events);
  REQUIRE(spawned.size() == 5);
  const int lanes[5] = {0, 1, 0, 1, 2};  // seed 7 lanes
  for (int i = 0; i < 5; ++i) CHECK(spawned[i].safe_lane == lanes[i]);
  std::vector<std::int64_t> spawn_t;
  for (const auto& ev : events) {
    if (std::holds_alternative<event::WaveSpawned>(ev.kind)) spawn_t.push_back(ev.t_ms);
  }
  for (int i = 0; i < 5; ++i) CHECK(spawn_t[i] == tick_to_ms(120 * i));
  CHECK(e.state().score == 5);
  CHECK(e.state().end_reason == EndReason::Completed);
}

TEST_CASE("runner plan with misses") {
  GameConfig c = runner_config();
  c.length = 6;
  c.seed = 99;
  const std::vector<bool> plan = {true, false, false, true, false, true};
  const auto result = simulate(c, testing::plan_script(c, plan));
  const auto resolved = events_of<event::Resolved>(result.log.events());
  REQUIRE(resolved.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(resolved[i].correct == plan[i]);
  CHECK(result.stats.final_score == 3);
}

TEST_CASE("same seed and input give identical event logs") {
  GameConfig c = grid_config();
  c.seed = 31337;
  c.length = 4;
  std::mt19937_64 rng(1);
  const auto script = testing::random_script(GridLayout::Grid3x3, rng, 60.0);
  const auto a = simulate(c, script);
  const auto b = simulate(c, script);
  CHECK(event_lines(a.log.events()) == event_lines(b.log.events()));
  CHECK(serialize(a.log) == serialize(b.log));
}

TEST_CASE("mirrored view changes only the screen cells") {
  GameConfig c = grid_config();
  c.seed = 5;
  c.length = 6;
  std::mt19937_64 rng(8);
  const auto script = testing::random_script(GridLayout::Grid3x3, rng, 90.0);
  GameConfig m = c;
  m.view = ViewMode::Mirrored;
  const auto a = events_of<event::Resolved>(simulate(c, script).log.events());
  const auto b = events_of<event::Resolved>(simulate(m, script).log.events());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].correct == b[i].correct);
    CHECK(a[i].target == b[i].target);
  }
  const auto shown = events_of<event::TargetShown>(simulate(m, script).log.events());
  for (const auto& s : shown) CHECK(s.screen_cell == screen_cell(s.cell, ViewMode::Mirrored));
}

TEST_CASE("event json round trip") {
  const std::vector<GameEventKind> kinds = {
      event::TargetShown{2, {0, 1}, {0, 1}},  event::WaveSpawned{3, 2, 0},
      event::Resolved{1, true, {2, 2}, Cell{2, 2}}, event::Resolved{1, false, {2, 2}, std::nullopt},
      event::ScoreChanged{4},                 event::DifficultyEased{12.5},
      event::LifeLost{1},                     event::GameEnded{EndReason::AdaptiveStop},
      event::FeedbackCue{true}};
  for (const auto& k : kinds) {
    const Json j = event_to_json(k);
    CHECK(event_to_json(event_from_json(j)) == j);
  }
}

TEST_CASE("config json round trip and unknown keys") {
  GameConfig c = runner_config();
  c.lives = 3;
  c.seed = 0xFFFFFFFFFFFFFFFFULL;
  c.view = ViewMode::Mirrored;
  c.theme = Theme::Bee;
  CHECK(config_from_json(config_to_json(c)) == c);
  Json j = config_to_json(c);
  j["colour"] = "red";
  CHECK_THROWS_AS(config_from_json(j), Error);
}

}
