#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rehab/analytics.hpp"
#include "rehab/game.hpp"
#include "rehab/input_source.hpp"
#include "rehab/session_log.hpp"

namespace rehab {

// Grid used when nothing has been calibrated: 0.5 m pitch, 2 m from the sensor.
GridFrame default_grid(GridLayout layout);

// `iso` plus a millisecond offset, whole seconds, ISO-8601 UTC.
std::string iso8601_add_ms(const std::string& iso, std::int64_t ms);

// One recorded game. Owns the engine and the log; commands are stamped with
// the time of the next tick so a replay applies them before that tick's frame.
class GameSession {
 public:
  // Throws the GameEngine constructor errors; StorageFailure if `path` cannot be created.
  GameSession(SessionHeader header, std::optional<std::filesystem::path> path = std::nullopt);

  void start();
  void pause();
  void resume();
  std::vector<GameEvent> abort();
  // Records an extra command marker (e.g. virtual_move) at the next tick time.
  void note(Marker marker);

  // One 30 Hz tick. The frame, if any, is restamped with the tick time.
  std::vector<GameEvent> tick(std::optional<SkeletonFrame> frame);

  // Writes the footer; end_reason defaults to the engine's or "incomplete".
  void close(std::optional<std::string> ended_at = std::nullopt,
             std::optional<std::string> end_reason = std::nullopt);

  bool finished() const { return engine_.state().phase == Phase::Finished; }
  bool closed() const { return closed_; }
  std::int64_t next_tick() const { return next_tick_; }
  std::int64_t now_ms() const { return tick_to_ms(next_tick_); }
  const GameEngine& engine() const { return engine_; }
  const SessionLog& log() const { return log_; }
  // Set once a write failed; the in-memory log continues.
  const std::optional<std::string>& storage_warning() const { return storage_warning_; }

 private:
  void append(LogRecord record);

  SessionLog log_;
  GameEngine engine_;
  std::unique_ptr<SessionWriter> writer_;
  std::int64_t next_tick_ = 0;
  bool closed_ = false;
  std::optional<std::string> storage_warning_;
};

struct SimulationOptions {
  std::string nickname = "sim";
  std::string started_at = "2026-01-01T00:00:00Z";
  std::optional<GridFrame> grid;
  std::optional<std::filesystem::path> out;
  std::int64_t max_ticks = 4 * 3600 * kTickHz;
};

struct SimulationResult {
  SessionLog log;
  SessionStats stats;
};

// Headless game: scripted player, session clock derived from started_at.
// The config's seed drives both level generation and sensor noise.
SimulationResult simulate(const GameConfig& config, const MovementScript& script,
                          const SimulationOptions& options = {});

// Same, but from any frame source.
SimulationResult run_headless(const GameConfig& config, FrameSource& source, const SimulationOptions& options);

// Re-runs a recorded session through a fresh engine built from its header,
// feeding its frames via a ReplaySource and its command markers at their times.
std::vector<GameEvent> replay_events(const SessionLog& log);

// Serialized event records, one line each, for byte comparison.
std::vector<std::string> event_lines(const std::vector<GameEvent>& events);

struct VerifyReport {
  bool footer_present = false;
  bool match = false;
  std::vector<std::string> mismatches;  // field names that differ
  Json recomputed;
};

// Recomputes the footer summary from the body.
VerifyReport verify_session(const SessionLog& log);

}  // namespace rehab
