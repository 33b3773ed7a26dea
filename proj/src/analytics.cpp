#include "rehab/analytics.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rehab/calibration.hpp"
#include "rehab/error.hpp"

namespace rehab {
namespace {

struct OpenRound {
  std::int64_t shown_ms = 0;
  Cell target;
  bool reached = false;
};

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void append_fixed4(std::string& out, const std::optional<double>& v) {
  if (!v) return;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  out += buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Json stats_to_json(const SessionStats& s) {
  Json j;
  j["duration_s"] = s.duration_s;
  j["frames"] = s.frames;
  j["presented"] = s.presented;
  j["rounds_or_waves"] = s.rounds_or_waves;
  j["correct"] = s.correct;
  j["missed"] = s.missed;
  j["final_score"] = s.final_score;
  j["hit_rate"] = s.hit_rate;
  j["shift_latencies_s"] = s.shift_latencies_s;
  j["mean_shift_latency_s"] = optional_number(s.mean_shift_latency_s);
  j["median_shift_latency_s"] = optional_number(s.median_shift_latency_s);
  j["difficulty_eased_count"] = s.difficulty_eased_count;
  j["end_reason"] = s.end_reason;
  return j;
}

SessionStats stats_from_json(const Json& j) {
  SessionStats s;
  s.duration_s = j.at("duration_s").get<double>();
  s.frames = j.at("frames").get<std::int64_t>();
  s.presented = j.at("presented").get<int>();
  s.rounds_or_waves = j.at("rounds_or_waves").get<int>();
  s.correct = j.at("correct").get<int>();
  s.missed = j.at("missed").get<int>();
  s.final_score = j.at("final_score").get<int>();
  s.hit_rate = j.at("hit_rate").get<double>();
  s.shift_latencies_s = j.at("shift_latencies_s").get<std::vector<double>>();
  s.mean_shift_latency_s = optional_from(j, "mean_shift_latency_s");
  s.median_shift_latency_s = optional_from(j, "median_shift_latency_s");
  s.difficulty_eased_count = j.at("difficulty_eased_count").get<int>();
  s.end_reason = j.at("end_reason").get<std::string>();
  return s;
}

SessionStats compute_stats(const SessionLog& log) {
  SessionStats s;
  if (!log.records.empty()) {
    s.duration_s = static_cast<double>(log.records.back().t_ms - log.records.front().t_ms) / 1000.0;
  }
  std::map<int, OpenRound> open;
  for (const auto& r : log.records) {
    if (r.is_frame()) {
      ++s.frames;
      const auto cell = locate_cell(log.header.grid, player_floor_point(r.frame()));
      if (!cell) continue;
      for (auto& [index, round] : open) {
        if (!round.reached && round.target == *cell) {
          round.reached = true;
          s.shift_latencies_s.push_back(static_cast<double>(r.t_ms - round.shown_ms) / 1000.0);
        }
      }
      continue;
    }
    if (!r.is_event()) continue;
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, event::TargetShown>) {
            ++s.presented;
            open[e.round] = {r.t_ms, e.cell, false};
          } else if constexpr (std::is_same_v<T, event::WaveSpawned>) {
            ++s.presented;
            open[e.wave] = {r.t_ms, Cell{0, e.safe_lane}, false};
          } else if constexpr (std::is_same_v<T, event::Resolved>) {
            ++s.rounds_or_waves;
            ++(e.correct ? s.correct : s.missed);
            open.erase(e.round);
          } else if constexpr (std::is_same_v<T, event::ScoreChanged>) {
            s.final_score = e.new_score;
          } else if constexpr (std::is_same_v<T, event::DifficultyEased>) {
            ++s.difficulty_eased_count;
          } else if constexpr (std::is_same_v<T, event::GameEnded>) {
            s.end_reason = std::string(to_string(e.reason));
          }
        },
        r.event());
  }
  s.hit_rate = s.rounds_or_waves ? static_cast<double>(s.correct) / s.rounds_or_waves : 0.0;
  if (!s.shift_latencies_s.empty()) {
    s.mean_shift_latency_s =
        std::accumulate(s.shift_latencies_s.begin(), s.shift_latencies_s.end(), 0.0) /
        static_cast<double>(s.shift_latencies_s.size());
    s.median_shift_latency_s = median_of(s.shift_latencies_s);
  }
  return s;
}

PostureTrace compute_posture_trace(const SessionLog& log) {
  PostureTrace trace;
  struct Acc {
    double min = 0.0, max = 0.0, sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
      if (n == 0) min = max = v;
      min = std::min(min, v);
      max = std::max(max, v);
      sum += v;
      ++n;
    }
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : log.records) {
    if (!r.is_frame()) continue;
    PostureMetrics m = posture_metrics(r.frame());
    if (!m.shoulder_tilt_deg || !m.hip_tilt_deg || !m.knee_l_deg || !m.knee_r_deg || !m.ankle_l_deg ||
        !m.ankle_r_deg) {
      ++trace.skipped;
      continue;
    }
    acc["shoulder_tilt_deg"].add(*m.shoulder_tilt_deg);
    acc["hip_tilt_deg"].add(*m.hip_tilt_deg);
    acc["knee_l_deg"].add(*m.knee_l_deg);
    acc["knee_r_deg"].add(*m.knee_r_deg);
    acc["ankle_l_deg"].add(*m.ankle_l_deg);
    acc["ankle_r_deg"].add(*m.ankle_r_deg);
    for (const auto& [joint, offset] : m.depth_offsets) {
      acc["depth_" + std::string(joint_name(joint)) + "_m"].add(offset);
    }
    trace.samples.push_back({r.t_ms, std::move(m)});
  }
  for (const auto& [name, a] : acc) {
    trace.summary[name] = {a.min, a.max, a.sum / static_cast<double>(a.n)};
  }
  return trace;
}

std::pair<int, int> iso_week_of(const std::string& timestamp) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  if (std::sscanf(timestamp.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
    throw Error(ErrorCode::InvalidConfig, "bad timestamp '" + timestamp + "'");
  }
  const sys_days day{year{y} / month{m} / std::chrono::day{d}};
  const unsigned iso_weekday = weekday{day}.iso_encoding();  // Mon=1 .. Sun=7
  const sys_days thursday = day + days{4 - static_cast<int>(iso_weekday)};
  const int iso_year = static_cast<int>(year_month_day{thursday}.year());
  const sys_days jan1{year{iso_year} / January / 1};
  return {iso_year, static_cast<int>((thursday - jan1).count() / 7 + 1)};
}

TrendSummary profile_trends(const std::vector<SessionRef>& sessions) {
  TrendSummary t;
  std::map<std::pair<int, int>, WeekBucket> weeks;
  std::vector<double> latencies;
  for (const auto& s : sessions) {
    const auto [yr, wk] = iso_week_of(s.started_at);
    WeekBucket& b = weeks[{yr, wk}];
    b.iso_year = yr;
    b.iso_week = wk;
    ++b.sessions;
    b.minutes += s.stats.duration_s / 60.0;
    t.total_minutes += s.stats.duration_s / 60.0;
    t.scores.push_back(s.stats.final_score);
    t.hit_rates.push_back(s.stats.hit_rate);
    if (s.stats.mean_shift_latency_s) latencies.push_back(*s.stats.mean_shift_latency_s);
  }
  for (const auto& [key, b] : weeks) t.weeks.push_back(b);
  if (latencies.size() >= 2) t.latency_delta_s = latencies.back() - latencies.front();
  return t;
}

Json trends_to_json(const TrendSummary& t) {
  Json j;
  Json weeks = Json::array();
  for (const auto& w : t.weeks) {
    weeks.push_back({{"iso_year", w.iso_year}, {"iso_week", w.iso_week}, {"sessions", w.sessions},
                     {"minutes", w.minutes}});
  }
  j["weeks"] = weeks;
  j["total_minutes"] = t.total_minutes;
  j["scores"] = t.scores;
  j["hit_rates"] = t.hit_rates;
  j["latency_delta_s"] = optional_number(t.latency_delta_s);
  return j;
}

std::string trace_to_csv(const PostureTrace& trace) {
  std::string out = "t_ms,shoulder_tilt_deg,hip_tilt_deg,knee_l_deg,knee_r_deg,ankle_l_deg,ankle_r_deg";
  for (JointId j : depth_offset_joints()) out += ",depth_" + std::string(joint_name(j)) + "_m";
  out += "\r\n";
  for (const auto& s : trace.samples) {
    out += std::to_string(s.t_ms);
    for (const auto* v : {&s.metrics.shoulder_tilt_deg, &s.metrics.hip_tilt_deg, &s.metrics.knee_l_deg,
                          &s.metrics.knee_r_deg, &s.metrics.ankle_l_deg, &s.metrics.ankle_r_deg}) {
      out += ',';
      append_fixed4(out, *v);
    }
    for (JointId j : depth_offset_joints()) {
      out += ',';
      const auto it = s.metrics.depth_offsets.find(j);
      append_fixed4(out, it == s.metrics.depth_offsets.end() ? std::nullopt
                                                             : std::optional<double>(it->second));
    }
    out += "\r\n";
  }
  return out;
}

std::string stats_to_csv(const SessionStats& s) {
  std::string out =
      "duration_s,frames,presented,rounds_or_waves,correct,missed,final_score,hit_rate,"
      "mean_shift_latency_s,median_shift_latency_s,difficulty_eased_count,end_reason\r\n";
  auto num = [](double v) {
    std::string o;
    append_fixed4(o, v);
    return o;
  };
  out += num(s.duration_s) + "," + std::to_string(s.frames) + "," + std::to_string(s.presented) + "," +
         std::to_string(s.rounds_or_waves) + "," + std::to_string(s.correct) + "," +
         std::to_string(s.missed) + "," + std::to_string(s.final_score) + "," + num(s.hit_rate) + ",";
  append_fixed4(out, s.mean_shift_latency_s);
  out += ',';
  append_fixed4(out, s.median_shift_latency_s);
  out += "," + std::to_string(s.difficulty_eased_count) + "," + csv_field(s.end_reason) + "\r\n";
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::StorageFailure, "write to " + path.string() + " failed");
}

void export_csv(const PostureTrace& trace, const std::filesystem::path& path) {
  write_text_file(path, trace_to_csv(trace));
}

void export_csv(const SessionStats& stats, const std::filesystem::path& path) {
  write_text_file(path, stats_to_csv(stats));
}

}  // namespace rehab
