#include "rehab/game.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rehab/error.hpp"

namespace rehab {

std::int64_t seconds_to_ticks(double seconds) {
  return std::max<std::int64_t>(1, std::llround(seconds * kTickHz));
}

std::string_view to_string(Mechanic m) { return m == Mechanic::Runner ? "runner" : "grid_dance"; }
std::string_view to_string(Theme t) { return t == Theme::Mage ? "mage" : "bee"; }
std::string_view to_string(ViewMode v) { return v == ViewMode::ThirdPerson ? "third_person" : "mirrored"; }
std::string_view to_string(GridLayout l) { return l == GridLayout::Line3 ? "line3" : "grid3x3"; }

std::string_view to_string(EndReason r) {
  switch (r) {
    case EndReason::Completed: return "completed";
    case EndReason::LivesExhausted: return "lives_exhausted";
    case EndReason::AdaptiveStop: return "adaptive_stop";
    case EndReason::TherapistAbort: return "therapist_abort";
  }
  return "unknown";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Running: return "running";
    case Phase::Paused: return "paused";
    case Phase::Finished: return "finished";
  }
  return "unknown";
}

void AdaptivePolicy::validate() const {
  if (ease_after_misses < 1 || ease_after_misses >= stop_after_misses) {
    throw Error(ErrorCode::InvalidConfig, "adaptive policy needs 1 <= ease_after_misses < stop_after_misses");
  }
  if (!(ease_factor > 1.0)) throw Error(ErrorCode::InvalidConfig, "ease_factor must exceed 1");
  if (!(ease_cap_factor >= 1.0)) throw Error(ErrorCode::InvalidConfig, "ease_cap_factor must be at least 1");
}

void GameConfig::validate() const {
  if (length < 1) throw Error(ErrorCode::InvalidConfig, "length must be at least 1");
  if (!(shift_time_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "shift_time_s must be positive");
  if (!(approach_time_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "approach_time_s must be positive");
  if (lives && *lives < 1) throw Error(ErrorCode::InvalidConfig, "lives must be at least 1");
  const GridLayout expected = mechanic == Mechanic::GridDance ? GridLayout::Grid3x3 : GridLayout::Line3;
  if (layout != expected) {
    throw Error(ErrorCode::InvalidConfig, std::string(to_string(mechanic)) + " requires layout " +
                                              std::string(to_string(expected)));
  }
  adaptive.validate();
  constraints.validate();
}

Cell screen_cell(Cell physical, ViewMode view) {
  if (view == ViewMode::ThirdPerson) return physical;
  return {physical.row, 2 - physical.col};
}

AdaptiveOutcome adaptive_update(GameState& state, const AdaptivePolicy& policy, double initial_time_s,
                                bool correct) {
  AdaptiveOutcome out;
  if (correct) {
    state.consecutive_misses = 0;
    return out;
  }
  ++state.consecutive_misses;
  if (state.consecutive_misses == policy.ease_after_misses) {
    const double cap = initial_time_s * policy.ease_cap_factor;
    state.effective_time_s = std::min(state.effective_time_s * policy.ease_factor, cap);
    out.eased = event::DifficultyEased{state.effective_time_s};
  }
  if (state.consecutive_misses >= policy.stop_after_misses) out.stop = true;
  return out;
}

GameEngine::GameEngine(GameConfig config, GridFrame grid)
    : config_(std::move(config)), grid_(grid), generator_(config_.seed) {
  config_.validate();
  if (grid_.layout != config_.layout) {
    throw Error(ErrorCode::LayoutMismatch, "calibrated grid is " + std::string(to_string(grid_.layout)) +
                                               ", game needs " + std::string(to_string(config_.layout)));
  }
  state_.effective_time_s = config_.initial_time_s();
  state_.lives_remaining = config_.lives;
}

void GameEngine::start() {
  if (state_.phase != Phase::Idle) throw Error(ErrorCode::InvalidPhase, "game already started");
  state_.phase = Phase::Running;
}

void GameEngine::pause() {
  if (state_.phase != Phase::Running) throw Error(ErrorCode::InvalidPhase, "pause needs a running game");
  state_.phase = Phase::Paused;
  state_.pause_reason = PauseReason::Therapist;
}

void GameEngine::resume() {
  if (state_.phase != Phase::Paused) throw Error(ErrorCode::InvalidPhase, "resume needs a paused game");
  state_.phase = Phase::Running;
  state_.pause_reason.reset();
  state_.ticks_without_frame = 0;
}

std::vector<GameEvent> GameEngine::abort(std::int64_t t_ms) {
  if (state_.phase == Phase::Finished) throw Error(ErrorCode::InvalidPhase, "game already finished");
  std::vector<GameEventKind> kinds;
  finish(EndReason::TherapistAbort, kinds);
  std::vector<GameEvent> out;
  for (auto& k : kinds) out.push_back({t_ms, std::move(k)});
  return out;
}

std::vector<GameEvent> GameEngine::tick(const TickInput& input) {
  if (state_.phase == Phase::Idle || state_.phase == Phase::Finished) {
    throw Error(ErrorCode::InvalidPhase, "tick needs a started, unfinished game");
  }
  const bool has_input = input.frame.has_value() || input.virtual_cell.has_value();
  if (input.virtual_cell) {
    state_.player_cell = is_valid_cell(grid_.layout, *input.virtual_cell)
                             ? std::optional<Cell>(*input.virtual_cell)
                             : std::nullopt;
  } else if (input.frame) {
    state_.player_cell = locate_cell(grid_, player_floor_point(*input.frame));
  }

  if (state_.phase == Phase::Paused) {
    if (state_.pause_reason == PauseReason::SensorGap && has_input) {
      state_.phase = Phase::Running;
      state_.pause_reason.reset();
      state_.ticks_without_frame = 0;
    } else {
      return {};
    }
  }

  if (has_input) {
    state_.ticks_without_frame = 0;
  } else if (++state_.ticks_without_frame > kSensorGapTicks) {
    state_.phase = Phase::Paused;
    state_.pause_reason = PauseReason::SensorGap;
    return {};
  }

  std::vector<GameEventKind> kinds;
  if (config_.mechanic == Mechanic::GridDance) {
    tick_grid(kinds);
  } else {
    tick_runner(kinds);
  }
  ++state_.tick;

  std::vector<GameEvent> out;
  out.reserve(kinds.size());
  for (auto& k : kinds) out.push_back({input.t_ms, std::move(k)});
  return out;
}

void GameEngine::tick_grid(std::vector<GameEventKind>& out) {
  const std::int64_t now = state_.tick;
  if (state_.current_target && now >= state_.round_deadline_tick) {
    const Cell target = *state_.current_target;
    state_.current_target.reset();
    state_.next_round_tick = now + kInterRoundTicks;
    resolve(state_.rounds_started - 1, target, state_.player_cell == target, out);
    return;
  }
  if (!state_.current_target && state_.rounds_started < config_.length && now >= state_.next_round_tick) {
    const Cell target = generator_.next_grid_target(config_.constraints, state_.last_target);
    state_.last_target = target;
    state_.current_target = target;
    state_.round_deadline_tick = now + seconds_to_ticks(state_.effective_time_s);
    out.push_back(event::TargetShown{state_.rounds_started, target, screen_cell(target, config_.view)});
    ++state_.rounds_started;
  }
}

void GameEngine::tick_runner(std::vector<GameEventKind>& out) {
  const std::int64_t now = state_.tick;
  while (!state_.active_waves.empty() && state_.active_waves.front().resolve_tick <= now) {
    const ActiveWave due = state_.active_waves.front();
    state_.active_waves.pop_front();
    const Cell target{0, due.wave.safe_lane};
    resolve(due.index, target, state_.player_cell == target, out);
    if (state_.phase == Phase::Finished) return;
  }
  if (state_.waves_spawned < config_.length && now >= state_.next_spawn_tick) {
    const Wave wave = generator_.next_wave(config_.constraints, state_.last_safe_lane, now);
    state_.last_safe_lane = wave.safe_lane;
    state_.active_waves.push_back({state_.waves_spawned, wave, now + seconds_to_ticks(state_.effective_time_s)});
    out.push_back(event::WaveSpawned{state_.waves_spawned, wave.safe_lane,
                                     screen_cell({0, wave.safe_lane}, config_.view).col});
    ++state_.waves_spawned;
    state_.next_spawn_tick = now + seconds_to_ticks(config_.constraints.spawn_interval_s);
  }
}

void GameEngine::resolve(int index, Cell target, bool correct, std::vector<GameEventKind>& out) {
  ++state_.resolved;
  out.push_back(event::Resolved{index, correct, target, state_.player_cell});
  if (correct) {
    ++state_.score;
    out.push_back(event::ScoreChanged{state_.score});
  }
  out.push_back(event::FeedbackCue{correct});
  if (!correct && state_.lives_remaining) {
    state_.lives_remaining = *state_.lives_remaining - 1;
    out.push_back(event::LifeLost{*state_.lives_remaining});
  }
  const AdaptiveOutcome adaptive =
      adaptive_update(state_, config_.adaptive, config_.initial_time_s(), correct);
  if (adaptive.eased) out.push_back(*adaptive.eased);

  if (adaptive.stop) {
    finish(EndReason::AdaptiveStop, out);
  } else if (state_.lives_remaining && *state_.lives_remaining == 0) {
    finish(EndReason::LivesExhausted, out);
  } else if (state_.resolved >= config_.length) {
    finish(EndReason::Completed, out);
  }
}

void GameEngine::finish(EndReason reason, std::vector<GameEventKind>& out) {
  state_.phase = Phase::Finished;
  state_.end_reason = reason;
  state_.pause_reason.reset();
  out.push_back(event::GameEnded{reason});
}

std::optional<double> GameEngine::countdown_s() const {
  if (state_.phase == Phase::Idle || state_.phase == Phase::Finished) return std::nullopt;
  std::int64_t remaining = 0;
  if (config_.mechanic == Mechanic::GridDance) {
    if (!state_.current_target) return std::nullopt;
    remaining = state_.round_deadline_tick - state_.tick;
  } else {
    if (state_.active_waves.empty()) return std::nullopt;
    remaining = state_.active_waves.front().resolve_tick - state_.tick;
  }
  return static_cast<double>(std::max<std::int64_t>(0, remaining)) / kTickHz;
}

}  // namespace rehab
