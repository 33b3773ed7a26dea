#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "rehab/error.hpp"
#include "rehab/level_gen.hpp"
#include "rehab/prng.hpp"

using namespace rehab;

TEST_SUITE("level_gen") {

TEST_CASE("splitmix64 reference vector") {
  Prng p(0);
  CHECK(p.next() == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("same seed same sequence, different seeds diverge early") {
  Prng a(123), b(123), c(124);
  bool differ = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    if (i < 10 && x != c.next()) differ = true;
  }
  CHECK(differ);
}

TEST_CASE("unit draws stay in [0, 1)") {
  Prng p(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = p.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("seed 42 first grid target") {
  LevelGenerator g(42);
  CHECK(g.next_grid_target(GeneratorConstraints{}, std::nullopt) == Cell{0, 1});
  LevelGenerator again(42);
  CHECK(again.next_grid_target(GeneratorConstraints{}, std::nullopt) == Cell{0, 1});
}

TEST_CASE("max step 1 forbids repeat and far cells") {
  GeneratorConstraints c;
  c.max_step = 1;
  LevelGenerator g(5);
  std::set<Cell> seen;
  for (int i = 0; i < 2000; ++i) {
    const Cell x = g.next_grid_target(c, Cell{1, 1});
    CHECK(x != Cell{1, 1});
    seen.insert(x);
  }
  CHECK(seen.size() == 8);

  // from a corner only three neighbours qualify
  for (int i = 0; i < 500; ++i) {
    const Cell x = g.next_grid_target(c, Cell{0, 0});
    CHECK(std::max(std::abs(x.row), std::abs(x.col)) <= 1);
    CHECK(x != Cell{0, 0});
  }
}

TEST_CASE("draws are uniform over the eligible cells") {
  LevelGenerator g(2024);
  std::map<Cell, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[g.next_grid_target(GeneratorConstraints{}, Cell{1, 1})];
  REQUIRE(counts.size() == 8);
  const double p = 1.0 / 8, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  for (const auto& [cell, k] : counts) CHECK(std::abs(k - mean) <= 3 * sigma);
}

TEST_CASE("no repeat allowed when repeats forbidden and step zero") {
  GeneratorConstraints c;
  c.max_step = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("wave lanes") {
  GeneratorConstraints c;
  c.safe_lane_change_prob = 0.0;
  LevelGenerator g(3);
  std::optional<int> prev;
  Wave first = g.next_wave(c, prev, 0);
  prev = first.safe_lane;
  for (int i = 1; i < 200; ++i) {
    const Wave w = g.next_wave(c, prev, i * 120);
    CHECK(w.safe_lane == first.safe_lane);
    prev = w.safe_lane;
  }

  c.safe_lane_change_prob = 1.0;
  prev.reset();
  for (int i = 0; i < 500; ++i) {
    const Wave w = g.next_wave(c, prev, i);
    if (prev) CHECK(w.safe_lane != *prev);
    CHECK(w.blocked_lanes[0] != w.safe_lane);
    CHECK(w.blocked_lanes[1] != w.safe_lane);
    CHECK(w.blocked_lanes[0] != w.blocked_lanes[1]);
    prev = w.safe_lane;
  }
}

TEST_CASE("seed 7 first twenty safe lanes") {
  const int expected[20] = {0, 1, 0, 1, 2, 1, 1, 1, 1, 1, 2, 1, 1, 2, 1, 1, 1, 2, 2, 0};
  LevelGenerator g(7);
  std::optional<int> prev;
  for (int i = 0; i < 20; ++i) {
    const Wave w = g.next_wave(GeneratorConstraints{}, prev, i * 120);
    CHECK(w.safe_lane == expected[i]);
    CHECK(w.spawn_tick == i * 120);
    prev = w.safe_lane;
  }
}

TEST_CASE("constraint validation") {
  GeneratorConstraints c;
  CHECK_NOTHROW(c.validate());
  c.safe_lane_change_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.spawn_interval_s = 0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_step = 3;
  CHECK_THROWS_AS(c.validate(), Error);
}

}
