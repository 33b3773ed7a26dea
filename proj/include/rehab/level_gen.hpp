#pragma once

#include <cstdint>
#include <optional>

#include "rehab/calibration.hpp"
#include "rehab/prng.hpp"

namespace rehab {

struct GeneratorConstraints {
  bool forbid_repeat = true;
  int max_step = 2;  // Chebyshev distance between consecutive grid targets, 1 or 2
  double spawn_interval_s = 4.0;
  double safe_lane_change_prob = 0.7;

  // Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const GeneratorConstraints&, const GeneratorConstraints&) = default;
};

struct Wave {
  int safe_lane = 0;
  int blocked_lanes[2] = {0, 0};
  std::int64_t spawn_tick = 0;
};

class LevelGenerator {
 public:
  explicit LevelGenerator(std::uint64_t seed) : prng_(seed) {}

  // Uniform over the row-major candidate list; throws EmptyCandidateSet.
  Cell next_grid_target(const GeneratorConstraints& constraints, std::optional<Cell> previous);

  Wave next_wave(const GeneratorConstraints& constraints, std::optional<int> previous_safe_lane,
                 std::int64_t spawn_tick);

  const Prng& prng() const { return prng_; }

 private:
  Prng prng_;
};

}  // namespace rehab
