#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rehab/serialization.hpp"
#include "rehab/session_log.hpp"
#include "rehab/skeleton.hpp"

namespace rehab {

struct SessionStats {
  double duration_s = 0.0;
  std::int64_t frames = 0;
  int presented = 0;        // targets shown or waves spawned
  int rounds_or_waves = 0;  // resolved
  int correct = 0;
  int missed = 0;
  int final_score = 0;
  double hit_rate = 0.0;
  std::vector<double> shift_latencies_s;
  std::optional<double> mean_shift_latency_s;
  std::optional<double> median_shift_latency_s;
  int difficulty_eased_count = 0;
  std::string end_reason = "incomplete";

  friend bool operator==(const SessionStats&, const SessionStats&) = default;
};

Json stats_to_json(const SessionStats& stats);
SessionStats stats_from_json(const Json& j);

// Pure function of the log header and body; the footer is ignored.
SessionStats compute_stats(const SessionLog& log);

struct MetricSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct PostureSample {
  std::int64_t t_ms = 0;
  PostureMetrics metrics;
};

struct PostureTrace {
  std::vector<PostureSample> samples;
  std::size_t skipped = 0;  // frames where an angle could not be computed
  std::map<std::string, MetricSummary> summary;
};

PostureTrace compute_posture_trace(const SessionLog& log);

struct SessionRef {
  std::string id;
  std::string started_at;
  SessionStats stats;
};

struct WeekBucket {
  int iso_year = 0;
  int iso_week = 0;
  int sessions = 0;
  double minutes = 0.0;
};

struct TrendSummary {
  std::vector<WeekBucket> weeks;
  double total_minutes = 0.0;
  std::vector<int> scores;
  std::vector<double> hit_rates;
  // Mean latency of the last session minus the first, over sessions that have one.
  std::optional<double> latency_delta_s;
};

// ISO-8601 week of a "YYYY-MM-DD..." timestamp.
std::pair<int, int> iso_week_of(const std::string& timestamp);

// Sessions must be sorted by start time.
TrendSummary profile_trends(const std::vector<SessionRef>& sessions);
Json trends_to_json(const TrendSummary& trends);

std::string trace_to_csv(const PostureTrace& trace);
std::string stats_to_csv(const SessionStats& stats);
// Throws StorageFailure.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void export_csv(const PostureTrace& trace, const std::filesystem::path& path);
void export_csv(const SessionStats& stats, const std::filesystem::path& path);

}  // namespace rehab
