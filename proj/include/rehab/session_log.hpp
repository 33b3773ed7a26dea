#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rehab/calibration.hpp"
#include "rehab/game.hpp"
#include "rehab/serialization.hpp"
#include "rehab/skeleton.hpp"

namespace rehab {

inline constexpr int kSessionFormatVersion = 1;

struct SessionHeader {
  int format_version = kSessionFormatVersion;
  std::string nickname;
  std::string started_at;  // ISO-8601 UTC, e.g. 2026-10-18T09:30:00Z
  std::uint64_t seed = 0;
  GameConfig config;
  GridFrame grid;
  std::optional<std::string> video_ref;
};

// Non-game occurrences: therapist commands (source "command") and notes
// raised by the runtime (source "engine"), e.g. sensor gaps.
struct Marker {
  std::string type;
  std::string source = "command";
  Json data;  // null when there is no payload
};

struct LogRecord {
  std::int64_t t_ms = 0;
  std::variant<SkeletonFrame, GameEventKind, Marker> body;

  bool is_frame() const { return std::holds_alternative<SkeletonFrame>(body); }
  bool is_event() const { return std::holds_alternative<GameEventKind>(body); }
  bool is_marker() const { return std::holds_alternative<Marker>(body); }
  const SkeletonFrame& frame() const { return std::get<SkeletonFrame>(body); }
  const GameEventKind& event() const { return std::get<GameEventKind>(body); }
  const Marker& marker() const { return std::get<Marker>(body); }

  // Order among records sharing a timestamp: markers, then frames, then events.
  int kind_rank() const { return static_cast<int>(is_frame()) + 2 * static_cast<int>(is_event()); }

  static LogRecord from_frame(const SkeletonFrame& f) { return {f.t_ms, f}; }
  static LogRecord from_event(const GameEvent& e) { return {e.t_ms, e.kind}; }
};

struct SessionFooter {
  std::int64_t t_ms = 0;
  std::string ended_at;
  std::string end_reason;
  Json summary;  // SessionStats as JSON
};

struct SessionLog {
  SessionHeader header;
  std::vector<LogRecord> records;
  std::optional<SessionFooter> footer;

  std::vector<GameEvent> events() const;
};

std::string header_to_line(const SessionHeader& header);
std::string record_to_line(const LogRecord& record);
std::string footer_to_line(const SessionFooter& footer);
std::string serialize(const SessionLog& log);

// True when `next` may follow `last` in a log body.
bool in_order(const LogRecord& last, const LogRecord& next);

struct SkippedLine {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct ReadReport {
  std::vector<SkippedLine> skipped;
  bool footer_present = false;
};

// Tolerant parsing skips malformed or out-of-order lines and reports them.
// Strict parsing throws MalformedFrame / OutOfOrderRecord on the first one.
// Both throw MissingHeader and VersionUnsupported.
SessionLog parse_session(std::string_view text, ReadReport* report = nullptr, bool tolerant = true);
SessionLog read_session(const std::filesystem::path& path, ReadReport* report = nullptr,
                        bool tolerant = true);

// Appends one line per record; flushes at least once per second of session time.
class SessionWriter {
 public:
  // Throws StorageFailure when the file cannot be created.
  SessionWriter(const std::filesystem::path& path, const SessionHeader& header);
  ~SessionWriter();
  SessionWriter(const SessionWriter&) = delete;
  SessionWriter& operator=(const SessionWriter&) = delete;

  // Throws OutOfOrderRecord; throws StorageFailure once when a write fails,
  // after which recording is disabled and further appends are dropped.
  void append(const LogRecord& record);
  void close(const SessionFooter& footer);

  bool recording() const { return !failed_ && out_.is_open(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  void write_line(const std::string& line);

  std::filesystem::path path_;
  std::ofstream out_;
  std::optional<LogRecord> last_;
  std::int64_t last_flush_ms_ = 0;
  bool failed_ = false;
};

struct ReplayItem {
  const LogRecord* record = nullptr;
  std::optional<PostureMetrics> metrics;  // frames only
};

// Records with from_ms <= t <= to_ms, in log order, with posture metrics for frames.
std::vector<ReplayItem> replay_iterate(const SessionLog& log, std::int64_t from_ms, std::int64_t to_ms);

// ISO-8601 UTC timestamps for headers and footers.
std::string iso8601_now();
// "2026-10-18T09:30:00Z" -> "20261018T093000Z"
std::string compact_timestamp(std::string_view iso);

}  // namespace rehab
