#include "rehab/session_log.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "rehab/error.hpp"

namespace rehab {
namespace {

Json header_to_json(const SessionHeader& h) {
  Json j;
  j["kind"] = "header";
  j["format_version"] = h.format_version;
  j["nickname"] = h.nickname;
  j["started_at"] = h.started_at;
  j["seed"] = h.seed;
  j["config"] = config_to_json(h.config);
  j["grid"] = grid_to_json(h.grid);
  j["video_ref"] = h.video_ref ? Json(*h.video_ref) : Json(nullptr);
  return j;
}

SessionHeader header_from_json(const Json& j) {
  SessionHeader h;
  h.format_version = j.at("format_version").get<int>();
  if (h.format_version != kSessionFormatVersion) {
    throw Error(ErrorCode::VersionUnsupported,
                "session format_version " + std::to_string(h.format_version) + " is not supported");
  }
  h.nickname = j.at("nickname").get<std::string>();
  h.started_at = j.at("started_at").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.config = config_from_json_unchecked(j.at("config"));
  h.grid = grid_from_json(j.at("grid"));
  if (j.contains("video_ref") && !j.at("video_ref").is_null()) {
    h.video_ref = j.at("video_ref").get<std::string>();
  }
  return h;
}

SessionFooter footer_from_json(const Json& j) {
  SessionFooter f;
  f.t_ms = j.at("t").get<std::int64_t>();
  f.ended_at = j.at("ended_at").get<std::string>();
  f.end_reason = j.at("end_reason").get<std::string>();
  f.summary = j.at("summary");
  return f;
}

LogRecord record_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "frame") return LogRecord::from_frame(frame_from_json(j));
  const std::int64_t t = j.at("t").get<std::int64_t>();
  if (t < 0) throw Error(ErrorCode::MalformedFrame, "negative timestamp");
  if (kind == "event") return {t, event_from_json(j)};
  if (kind == "marker") {
    Marker m;
    m.type = j.at("type").get<std::string>();
    m.source = j.at("source").get<std::string>();
    if (j.contains("data")) m.data = j.at("data");
    return {t, std::move(m)};
  }
  throw Error(ErrorCode::MalformedFrame, "unknown record kind '" + kind + "'");
}

}  // namespace

std::vector<GameEvent> SessionLog::events() const {
  std::vector<GameEvent> out;
  for (const auto& r : records) {
    if (r.is_event()) out.push_back({r.t_ms, r.event()});
  }
  return out;
}

std::string header_to_line(const SessionHeader& header) { return header_to_json(header).dump(); }

std::string record_to_line(const LogRecord& record) {
  if (record.is_frame()) return frame_to_line(record.frame());
  Json j;
  j["t"] = record.t_ms;
  if (record.is_event()) {
    j["kind"] = "event";
    const Json body = event_to_json(record.event());
    for (const auto& [key, value] : body.items()) j[key] = value;
  } else {
    const Marker& m = record.marker();
    j["kind"] = "marker";
    j["type"] = m.type;
    j["source"] = m.source;
    if (!m.data.is_null()) j["data"] = m.data;
  }
  return j.dump();
}

std::string footer_to_line(const SessionFooter& footer) {
  Json j;
  j["kind"] = "footer";
  j["t"] = footer.t_ms;
  j["ended_at"] = footer.ended_at;
  j["end_reason"] = footer.end_reason;
  j["summary"] = footer.summary;
  return j.dump();
}

std::string serialize(const SessionLog& log) {
  std::string out = header_to_line(log.header);
  out += '\n';
  for (const auto& r : log.records) {
    out += record_to_line(r);
    out += '\n';
  }
  if (log.footer) {
    out += footer_to_line(*log.footer);
    out += '\n';
  }
  return out;
}

bool in_order(const LogRecord& last, const LogRecord& next) {
  if (next.t_ms != last.t_ms) return next.t_ms > last.t_ms;
  return next.kind_rank() >= last.kind_rank();
}

SessionLog parse_session(std::string_view text, ReadReport* report, bool tolerant) {
  ReadReport local;
  ReadReport& rep = report ? *report : local;
  rep = {};

  SessionLog log;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto skip = [&](std::string reason, ErrorCode code) {
    if (!tolerant) throw Error(code, "line " + std::to_string(line_no) + ": " + reason);
    rep.skipped.push_back({line_no, std::move(reason)});
  };

  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception&) {
      if (!have_header) throw Error(ErrorCode::MissingHeader, "first line is not a session header");
      skip("unparseable JSON", ErrorCode::MalformedFrame);
      continue;
    }
    const std::string kind = j.is_object() ? j.value("kind", "") : "";
    if (!have_header) {
      if (kind != "header") throw Error(ErrorCode::MissingHeader, "first line is not a session header");
      try {
        log.header = header_from_json(j);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MissingHeader, std::string("unreadable header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    if (log.footer) {
      skip("record after footer", ErrorCode::OutOfOrderRecord);
      continue;
    }
    if (kind == "footer") {
      try {
        log.footer = footer_from_json(j);
        rep.footer_present = true;
      } catch (const nlohmann::json::exception&) {
        skip("malformed footer", ErrorCode::MalformedFrame);
      }
      continue;
    }
    try {
      LogRecord record = record_from_json(j);
      if (!log.records.empty() && !in_order(log.records.back(), record)) {
        skip("record out of order", ErrorCode::OutOfOrderRecord);
        continue;
      }
      log.records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      skip(std::string("malformed record: ") + e.what(), ErrorCode::MalformedFrame);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedFrame && e.code() != ErrorCode::InvalidCell &&
          e.code() != ErrorCode::InvalidConfig) {
        throw;
      }
      skip(e.what(), ErrorCode::MalformedFrame);
    }
  }
  if (!have_header) throw Error(ErrorCode::MissingHeader, "empty session file");
  return log;
}

SessionLog read_session(const std::filesystem::path& path, ReadReport* report, bool tolerant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::StorageFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_session(buf.str(), report, tolerant);
}

SessionWriter::SessionWriter(const std::filesystem::path& path, const SessionHeader& header)
    : path_(path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::StorageFailure, "cannot create " + path.string());
  write_line(header_to_line(header));
  out_.flush();
  if (failed_) throw Error(ErrorCode::StorageFailure, "cannot write header to " + path.string());
}

SessionWriter::~SessionWriter() {
  if (out_.is_open()) out_.flush();
}

void SessionWriter::write_line(const std::string& line) {
  if (failed_) return;
  out_ << line << '\n';
  if (!out_) failed_ = true;
}

void SessionWriter::append(const LogRecord& record) {
  if (last_ && !in_order(*last_, record)) {
    throw Error(ErrorCode::OutOfOrderRecord, "record at t=" + std::to_string(record.t_ms) +
                                                 " precedes t=" + std::to_string(last_->t_ms));
  }
  last_ = record;
  if (failed_) return;
  write_line(record_to_line(record));
  if (!failed_ && record.t_ms - last_flush_ms_ >= 1000) {
    out_.flush();
    if (!out_) failed_ = true;
    last_flush_ms_ = record.t_ms;
  }
  if (failed_) throw Error(ErrorCode::StorageFailure, "write to " + path_.string() + " failed");
}

void SessionWriter::close(const SessionFooter& footer) {
  if (!out_.is_open()) return;
  write_line(footer_to_line(footer));
  out_.flush();
  out_.close();
}

std::vector<ReplayItem> replay_iterate(const SessionLog& log, std::int64_t from_ms, std::int64_t to_ms) {
  std::vector<ReplayItem> out;
  for (const auto& r : log.records) {
    if (r.t_ms < from_ms || r.t_ms > to_ms) continue;
    ReplayItem item{&r, std::nullopt};
    if (r.is_frame()) item.metrics = posture_metrics(r.frame());
    out.push_back(item);
  }
  return out;
}

std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string compact_timestamp(std::string_view iso) {
  std::string out;
  for (char c : iso) {
    if (c != '-' && c != ':') out += c;
  }
  return out;
}

}  // namespace rehab
