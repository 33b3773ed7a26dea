#include "rehab/session_runner.hpp"

#include <chrono>
#include <cstdio>
#include <map>

#include "rehab/error.hpp"

namespace rehab {
namespace {

// Noise stream is decorrelated from the level stream that uses the same seed.
constexpr std::uint64_t kNoiseSalt = 0x6A09E667F3BCC909ULL;

}  // namespace

GridFrame default_grid(GridLayout layout) {
  GridFrame g;
  g.layout = layout;
  if (layout == GridLayout::Grid3x3) {
    g.origin = {-0.5, 0.0, 2.0};
    g.basis_row = {0.0, 0.0, 0.5};
    g.basis_col = {0.5, 0.0, 0.0};
  } else {
    g.origin = {-0.5, 0.0, 2.5};
    g.basis_col = {0.5, 0.0, 0.0};
  }
  return g;
}

std::string iso8601_add_ms(const std::string& iso, std::int64_t ms) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (std::sscanf(iso.c_str(), "%d-%u-%uT%u:%u:%u", &y, &mo, &d, &h, &mi, &s) != 6) {
    throw Error(ErrorCode::InvalidConfig, "bad ISO-8601 timestamp '" + iso + "'");
  }
  const sys_seconds base = sys_days{year{y} / month{mo} / day{d}} + hours{h} + minutes{mi} + seconds{s};
  const sys_seconds t = base + duration_cast<seconds>(milliseconds{ms});
  const sys_days dd = floor<days>(t);
  const year_month_day ymd{dd};
  const hh_mm_ss hms{t - dd};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

GameSession::GameSession(SessionHeader header, std::optional<std::filesystem::path> path)
    : engine_([&] {
        header.config.seed = header.seed;
        return GameEngine(header.config, header.grid);
      }()) {
  log_.header = std::move(header);
  log_.header.config.seed = log_.header.seed;
  if (path) writer_ = std::make_unique<SessionWriter>(*path, log_.header);
}

void GameSession::append(LogRecord record) {
  log_.records.push_back(record);
  if (!writer_ || storage_warning_) return;
  try {
    writer_->append(record);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StorageFailure) throw;
    storage_warning_ = e.what();
  }
}

void GameSession::start() {
  engine_.start();
  append({now_ms(), Marker{"start", "command", nullptr}});
}

void GameSession::pause() {
  engine_.pause();
  append({now_ms(), Marker{"pause", "command", nullptr}});
}

void GameSession::resume() {
  engine_.resume();
  append({now_ms(), Marker{"resume", "command", nullptr}});
}

std::vector<GameEvent> GameSession::abort() {
  auto events = engine_.abort(now_ms());
  append({now_ms(), Marker{"abort", "command", nullptr}});
  for (const auto& e : events) append(LogRecord::from_event(e));
  return events;
}

void GameSession::note(Marker marker) { append({now_ms(), std::move(marker)}); }

std::vector<GameEvent> GameSession::tick(std::optional<SkeletonFrame> frame) {
  const std::int64_t t = now_ms();
  ++next_tick_;
  const Phase phase = engine_.state().phase;
  if (frame) {
    frame->t_ms = t;
    frame = quantized(*frame);
  }
  if (phase == Phase::Finished) return {};
  if (phase == Phase::Paused && engine_.state().pause_reason == PauseReason::SensorGap && frame) {
    append({t, Marker{"sensor_resume", "engine", nullptr}});
  }
  if (frame) append(LogRecord::from_frame(*frame));
  if (phase == Phase::Idle) return {};

  auto events = engine_.tick(TickInput{t, frame, std::nullopt});
  for (const auto& e : events) append(LogRecord::from_event(e));
  if (phase == Phase::Running && engine_.state().phase == Phase::Paused) {
    append({t, Marker{"sensor_gap", "engine", nullptr}});
  }
  return events;
}

void GameSession::close(std::optional<std::string> ended_at, std::optional<std::string> end_reason) {
  if (closed_) return;
  closed_ = true;
  SessionFooter footer;
  footer.t_ms = log_.records.empty() ? 0 : log_.records.back().t_ms;
  footer.ended_at = ended_at.value_or(iso8601_now());
  if (end_reason) {
    footer.end_reason = *end_reason;
  } else if (engine_.state().end_reason) {
    footer.end_reason = std::string(to_string(*engine_.state().end_reason));
  } else {
    footer.end_reason = "incomplete";
  }
  footer.summary = stats_to_json(compute_stats(log_));
  log_.footer = footer;
  if (writer_ && !storage_warning_) writer_->close(footer);
}

SimulationResult run_headless(const GameConfig& config, FrameSource& source, const SimulationOptions& options) {
  SessionHeader header;
  header.nickname = options.nickname;
  header.started_at = options.started_at;
  header.seed = config.seed;
  header.config = config;
  header.grid = options.grid.value_or(default_grid(config.layout));

  GameSession session(header, options.out);
  session.start();
  std::optional<std::string> reason;
  while (!session.finished()) {
    if (session.next_tick() >= options.max_ticks) {
      reason = "tick_limit";
      break;
    }
    auto frame = source.poll(session.now_ms());
    if (!frame && source.exhausted()) {
      reason = "source_exhausted";
      break;
    }
    session.tick(std::move(frame));
  }
  const std::int64_t end_ms = session.log().records.empty() ? 0 : session.log().records.back().t_ms;
  session.close(iso8601_add_ms(options.started_at, end_ms), reason);
  SimulationResult result;
  result.log = session.log();
  result.stats = stats_from_json(result.log.footer->summary);
  return result;
}

SimulationResult simulate(const GameConfig& config, const MovementScript& script,
                          const SimulationOptions& options) {
  const GridFrame grid = options.grid.value_or(default_grid(config.layout));
  ScriptedSource source(script, grid, config.seed ^ kNoiseSalt);
  SimulationOptions opts = options;
  opts.grid = grid;
  return run_headless(config, source, opts);
}

std::vector<GameEvent> replay_events(const SessionLog& log) {
  GameConfig config = log.header.config;
  config.seed = log.header.seed;
  GameEngine engine(config, log.header.grid);
  ReplaySource frames(log, 1.0);

  std::multimap<std::int64_t, const Marker*> commands;
  std::int64_t last_ms = 0;
  for (const auto& r : log.records) {
    last_ms = std::max(last_ms, r.t_ms);
    if (r.is_marker() && r.marker().source == "command") commands.emplace(r.t_ms, &r.marker());
  }

  std::vector<GameEvent> out;
  for (std::int64_t k = 0; tick_to_ms(k) <= last_ms; ++k) {
    const std::int64_t t = tick_to_ms(k);
    auto frame = frames.poll(t);
    const auto [lo, hi] = commands.equal_range(t);
    for (auto it = lo; it != hi; ++it) {
      const std::string& type = it->second->type;
      if (type == "start") {
        engine.start();
      } else if (type == "pause") {
        engine.pause();
      } else if (type == "resume") {
        engine.resume();
      } else if (type == "abort") {
        for (auto& e : engine.abort(t)) out.push_back(std::move(e));
      }
    }
    const Phase phase = engine.state().phase;
    if (phase == Phase::Idle || phase == Phase::Finished) {
      if (phase == Phase::Finished) break;
      continue;
    }
    for (auto& e : engine.tick(TickInput{t, frame, std::nullopt})) out.push_back(std::move(e));
    if (engine.state().phase == Phase::Finished) break;
  }
  return out;
}

std::vector<std::string> event_lines(const std::vector<GameEvent>& events) {
  std::vector<std::string> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(record_to_line(LogRecord::from_event(e)));
  return out;
}

VerifyReport verify_session(const SessionLog& log) {
  VerifyReport report;
  report.recomputed = stats_to_json(compute_stats(log));
  report.footer_present = log.footer.has_value();
  if (!log.footer) return report;
  const Json& stored = log.footer->summary;
  for (const auto& [key, value] : report.recomputed.items()) {
    if (!stored.contains(key) || stored.at(key) != value) report.mismatches.push_back(key);
  }
  for (const auto& [key, value] : stored.items()) {
    if (!report.recomputed.contains(key)) report.mismatches.push_back(key);
  }
  report.match = report.mismatches.empty();
  return report;
}

}  // namespace rehab
