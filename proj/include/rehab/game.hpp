#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "rehab/calibration.hpp"
#include "rehab/level_gen.hpp"
#include "rehab/skeleton.hpp"

namespace rehab {

inline constexpr int kTickHz = 30;

// Session clock: tick k happens at floor(k * 1000 / 30) ms.
inline constexpr std::int64_t tick_to_ms(std::int64_t tick) { return tick * 1000 / kTickHz; }
// Inverse of tick_to_ms for tick-aligned timestamps; otherwise the first tick at or after t.
inline constexpr std::int64_t ms_to_tick(std::int64_t t_ms) {
  return (t_ms * kTickHz + 999) / 1000;
}
std::int64_t seconds_to_ticks(double seconds);

enum class Mechanic { Runner, GridDance };
enum class Theme { Mage, Bee };
enum class ViewMode { ThirdPerson, Mirrored };

struct AdaptivePolicy {
  int ease_after_misses = 3;
  double ease_factor = 1.25;
  double ease_cap_factor = 2.0;  // cap on effective time, as a multiple of the initial time
  int stop_after_misses = 6;

  void validate() const;
  friend bool operator==(const AdaptivePolicy&, const AdaptivePolicy&) = default;
};

struct GameConfig {
  Mechanic mechanic = Mechanic::GridDance;
  Theme theme = Theme::Mage;
  ViewMode view = ViewMode::ThirdPerson;
  GridLayout layout = GridLayout::Grid3x3;
  int length = 10;               // rounds (grid) or waves (runner)
  double shift_time_s = 10.0;    // grid countdown per round
  double approach_time_s = 10.0; // runner wave travel time
  std::optional<int> lives;
  std::uint64_t seed = 0;
  AdaptivePolicy adaptive;
  GeneratorConstraints constraints;

  // Throws InvalidConfig.
  void validate() const;
  // Initial value of the time the adaptive controller eases.
  double initial_time_s() const {
    return mechanic == Mechanic::GridDance ? shift_time_s : approach_time_s;
  }

  friend bool operator==(const GameConfig&, const GameConfig&) = default;
};

enum class EndReason { Completed, LivesExhausted, AdaptiveStop, TherapistAbort };
enum class Phase { Idle, Running, Paused, Finished };
enum class PauseReason { Therapist, SensorGap };

std::string_view to_string(Mechanic m);
std::string_view to_string(Theme t);
std::string_view to_string(ViewMode v);
std::string_view to_string(GridLayout l);
std::string_view to_string(EndReason r);
std::string_view to_string(Phase p);

namespace event {
struct TargetShown {
  int round = 0;
  Cell cell;
  Cell screen_cell;
};
struct WaveSpawned {
  int wave = 0;
  int safe_lane = 0;
  int screen_lane = 0;
};
struct Resolved {
  int round = 0;  // round or wave index
  bool correct = false;
  Cell target;
  std::optional<Cell> player_cell;
};
struct ScoreChanged {
  int new_score = 0;
};
struct DifficultyEased {
  double new_time_s = 0.0;
};
struct LifeLost {
  int lives_remaining = 0;
};
struct GameEnded {
  EndReason reason = EndReason::Completed;
};
struct FeedbackCue {
  bool positive = false;
};
}  // namespace event

using GameEventKind = std::variant<event::TargetShown, event::WaveSpawned, event::Resolved,
                                   event::ScoreChanged, event::DifficultyEased, event::LifeLost,
                                   event::GameEnded, event::FeedbackCue>;

struct GameEvent {
  std::int64_t t_ms = 0;
  GameEventKind kind;
};

// Physical cell to the cell drawn on screen. Mirrored flips columns.
Cell screen_cell(Cell physical, ViewMode view);

struct ActiveWave {
  int index = 0;
  Wave wave;
  std::int64_t resolve_tick = 0;
};

struct GameState {
  Phase phase = Phase::Idle;
  std::optional<PauseReason> pause_reason;
  std::optional<EndReason> end_reason;
  std::int64_t tick = 0;  // running ticks only
  int score = 0;
  int consecutive_misses = 0;
  int resolved = 0;
  double effective_time_s = 0.0;
  std::optional<int> lives_remaining;

  // GridDance
  int rounds_started = 0;
  std::optional<Cell> current_target;
  std::optional<Cell> last_target;
  std::int64_t round_deadline_tick = 0;
  std::int64_t next_round_tick = 0;

  // Runner
  int waves_spawned = 0;
  std::int64_t next_spawn_tick = 0;
  std::optional<int> last_safe_lane;
  std::deque<ActiveWave> active_waves;

  std::optional<Cell> player_cell;
  int ticks_without_frame = 0;
};

struct AdaptiveOutcome {
  std::optional<event::DifficultyEased> eased;
  bool stop = false;
};

// Updates the miss counter and effective time after a resolution.
AdaptiveOutcome adaptive_update(GameState& state, const AdaptivePolicy& policy, double initial_time_s,
                                bool correct);

// What the engine sees on one tick: a skeleton frame, a virtual cell, or nothing.
struct TickInput {
  std::int64_t t_ms = 0;
  std::optional<SkeletonFrame> frame;
  std::optional<Cell> virtual_cell;
};

class GameEngine {
 public:
  // Throws InvalidConfig, or LayoutMismatch when the grid does not fit the mechanic.
  GameEngine(GameConfig config, GridFrame grid);

  const GameConfig& config() const { return config_; }
  const GridFrame& grid() const { return grid_; }
  const GameState& state() const { return state_; }
  std::uint64_t rng_state() const { return generator_.prng().state(); }

  void start();
  void pause();
  void resume();
  std::vector<GameEvent> abort(std::int64_t t_ms);

  // Advances one 30 Hz tick. Throws InvalidPhase when Idle or Finished.
  std::vector<GameEvent> tick(const TickInput& input);

  // Seconds left before the current grid round or the next runner wave resolves.
  std::optional<double> countdown_s() const;

  // Ticks without a frame after which the game pauses itself.
  static constexpr int kSensorGapTicks = kTickHz;
  static constexpr int kInterRoundTicks = 2 * kTickHz;

 private:
  void tick_grid(std::vector<GameEventKind>& out);
  void tick_runner(std::vector<GameEventKind>& out);
  void resolve(int index, Cell target, bool correct, std::vector<GameEventKind>& out);
  void finish(EndReason reason, std::vector<GameEventKind>& out);

  GameConfig config_;
  GridFrame grid_;
  GameState state_;
  LevelGenerator generator_;
};

}  // namespace rehab
