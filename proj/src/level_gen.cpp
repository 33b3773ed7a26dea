#include "rehab/level_gen.hpp"

#include <algorithm>
#include <cstdlib>
#include <vector>

#include "rehab/error.hpp"

namespace rehab {

void GeneratorConstraints::validate() const {
  if (max_step != 1 && max_step != 2) throw Error(ErrorCode::InvalidConfig, "max_step must be 1 or 2");
  if (!(spawn_interval_s >= 0.5 && spawn_interval_s <= 60.0)) {
    throw Error(ErrorCode::InvalidConfig, "spawn_interval_s must be within [0.5, 60]");
  }
  if (!(safe_lane_change_prob >= 0.0 && safe_lane_change_prob <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "safe_lane_change_prob must be within [0, 1]");
  }
}

Cell LevelGenerator::next_grid_target(const GeneratorConstraints& constraints,
                                      std::optional<Cell> previous) {
  std::vector<Cell> candidates;
  for (const Cell c : layout_cells(GridLayout::Grid3x3)) {
    if (previous) {
      if (constraints.forbid_repeat && c == *previous) continue;
      const int step = std::max(std::abs(c.row - previous->row), std::abs(c.col - previous->col));
      if (step > constraints.max_step) continue;
    }
    candidates.push_back(c);
  }
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no cell satisfies the constraints");
  return candidates[prng_.next() % candidates.size()];
}

Wave LevelGenerator::next_wave(const GeneratorConstraints& constraints,
                               std::optional<int> previous_safe_lane, std::int64_t spawn_tick) {
  int safe = 0;
  if (!previous_safe_lane) {
    safe = static_cast<int>(prng_.next() % 3);
  } else {
    safe = *previous_safe_lane;
    if (prng_.next_unit() < constraints.safe_lane_change_prob) {
      int others[2];
      int n = 0;
      for (int lane = 0; lane < 3; ++lane) {
        if (lane != safe) others[n++] = lane;
      }
      safe = others[prng_.next() % 2];
    }
  }
  Wave wave;
  wave.safe_lane = safe;
  wave.spawn_tick = spawn_tick;
  int n = 0;
  for (int lane = 0; lane < 3; ++lane) {
    if (lane != safe) wave.blocked_lanes[n++] = lane;
  }
  return wave;
}

}  // namespace rehab
