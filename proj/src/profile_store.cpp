#include "rehab/profile_store.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "rehab/error.hpp"

namespace rehab {
namespace {

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::StorageFailure, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StorageFailure, "bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + tmp);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::StorageFailure, "write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "cannot replace " + path.string() + ": " + ec.message());
}

std::string mechanic_key(Mechanic m) { return std::string(to_string(m)); }

}  // namespace

SystemDefaults SystemDefaults::builtin() {
  SystemDefaults d;
  d.grid_dance.mechanic = Mechanic::GridDance;
  d.grid_dance.layout = GridLayout::Grid3x3;
  d.runner.mechanic = Mechanic::Runner;
  d.runner.layout = GridLayout::Line3;
  return d;
}

Json defaults_to_json(const SystemDefaults& d) {
  Json j;
  j["format_version"] = d.format_version;
  j["grid_dance"] = config_to_json(d.grid_dance);
  j["runner"] = config_to_json(d.runner);
  return j;
}

SystemDefaults defaults_from_json(const Json& j) {
  SystemDefaults d;
  d.format_version = j.at("format_version").get<int>();
  if (d.format_version != kDefaultsFormatVersion) {
    throw Error(ErrorCode::VersionUnsupported, "defaults format_version not supported");
  }
  d.grid_dance = config_from_json(j.at("grid_dance"));
  d.runner = config_from_json(j.at("runner"));
  if (d.grid_dance.mechanic != Mechanic::GridDance || d.runner.mechanic != Mechanic::Runner) {
    throw Error(ErrorCode::InvalidConfig, "defaults are filed under the wrong mechanic");
  }
  return d;
}

std::filesystem::path shipped_defaults_path() { return std::filesystem::path(REHAB_DATA_DIR) / "defaults.json"; }

Json profile_to_json(const PatientProfile& p) {
  Json j;
  j["schema_version"] = kProfileSchemaVersion;
  j["nickname"] = p.nickname;
  j["created_at"] = p.created_at;
  j["notes"] = p.notes;
  Json overrides = Json::object();
  for (const auto& [m, delta] : p.overrides) overrides[mechanic_key(m)] = delta;
  j["overrides"] = overrides;
  j["sessions"] = p.sessions;
  return j;
}

PatientProfile profile_from_json(const Json& j) {
  static const std::set<std::string> known = {"schema_version", "nickname", "created_at",
                                              "notes",          "overrides", "sessions"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown profile field '" + key + "'");
  }
  if (j.at("schema_version").get<int>() != kProfileSchemaVersion) {
    throw Error(ErrorCode::VersionUnsupported, "profile schema_version not supported");
  }
  PatientProfile p;
  p.nickname = j.at("nickname").get<std::string>();
  p.created_at = j.at("created_at").get<std::string>();
  p.notes = j.value("notes", "");
  for (const auto& [key, delta] : j.at("overrides").items()) {
    p.overrides[mechanic_from_string(key)] = delta;
  }
  p.sessions = j.at("sessions").get<std::vector<std::string>>();
  return p;
}

bool valid_nickname(const std::string& nickname) {
  static const std::regex pattern("[a-z0-9_-]{3,24}");
  return std::regex_match(nickname, pattern);
}

GameConfig merge_config(const SystemDefaults& defaults, const PatientProfile& profile, Mechanic mechanic) {
  Json merged = config_to_json(defaults.for_mechanic(mechanic));
  if (const auto it = profile.overrides.find(mechanic); it != profile.overrides.end()) {
    if (!it->second.is_object()) throw Error(ErrorCode::InvalidMergedConfig, "override must be an object");
    merged.merge_patch(it->second);
  }
  try {
    GameConfig c = config_from_json(merged);
    if (c.mechanic != mechanic) throw Error(ErrorCode::InvalidConfig, "override changes the mechanic");
    return c;
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidMergedConfig, e.what());
  }
}

ProfileStore::ProfileStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + root_.string() + ": " + ec.message());
  if (!std::filesystem::exists(root_ / "defaults.json")) {
    write_json_file(root_ / "defaults.json", defaults_to_json(SystemDefaults::builtin()));
  }
}

SystemDefaults ProfileStore::defaults() const {
  std::lock_guard lock(mu_);
  return defaults_from_json(read_json_file(root_ / "defaults.json"));
}

PatientProfile ProfileStore::create_profile(const std::string& nickname, const std::string& notes) {
  if (!valid_nickname(nickname)) {
    throw Error(ErrorCode::InvalidNickname, "nickname must match [a-z0-9_-]{3,24}");
  }
  std::lock_guard lock(mu_);
  if (std::filesystem::exists(profile_dir(nickname) / "profile.json")) {
    throw Error(ErrorCode::DuplicateNickname, "nickname '" + nickname + "' already exists");
  }
  std::error_code ec;
  std::filesystem::create_directories(profile_dir(nickname), ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "cannot create profile directory: " + ec.message());
  PatientProfile p;
  p.nickname = nickname;
  p.created_at = iso8601_now();
  p.notes = notes;
  save_locked(p);
  return p;
}

PatientProfile ProfileStore::load_locked(const std::string& nickname) const {
  if (!valid_nickname(nickname) || !std::filesystem::exists(profile_dir(nickname) / "profile.json")) {
    throw Error(ErrorCode::UnknownNickname, "no profile '" + nickname + "'");
  }
  return profile_from_json(read_json_file(profile_dir(nickname) / "profile.json"));
}

void ProfileStore::save_locked(const PatientProfile& profile) {
  write_json_file(profile_dir(profile.nickname) / "profile.json", profile_to_json(profile));
}

PatientProfile ProfileStore::load(const std::string& nickname) const {
  std::lock_guard lock(mu_);
  return load_locked(nickname);
}

bool ProfileStore::exists(const std::string& nickname) const {
  return valid_nickname(nickname) && std::filesystem::exists(profile_dir(nickname) / "profile.json");
}

std::vector<std::string> ProfileStore::nicknames() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "profile.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PatientProfile ProfileStore::set_overrides(const std::string& nickname, Mechanic mechanic, const Json& delta) {
  std::lock_guard lock(mu_);
  PatientProfile p = load_locked(nickname);
  const SystemDefaults d = defaults_from_json(read_json_file(root_ / "defaults.json"));
  PatientProfile candidate = p;
  if (delta.is_null() || (delta.is_object() && delta.empty())) {
    candidate.overrides.erase(mechanic);
  } else {
    candidate.overrides[mechanic] = delta;
  }
  merge_config(d, candidate, mechanic);
  save_locked(candidate);
  return candidate;
}

GameConfig ProfileStore::effective_config(const std::string& nickname, Mechanic mechanic) const {
  std::lock_guard lock(mu_);
  const PatientProfile p = load_locked(nickname);
  return merge_config(defaults_from_json(read_json_file(root_ / "defaults.json")), p, mechanic);
}

SessionEntry ProfileStore::register_session(const std::string& nickname, const std::string& started_at) {
  std::lock_guard lock(mu_);
  PatientProfile p = load_locked(nickname);
  const std::string stamp = compact_timestamp(started_at);
  std::string id = nickname + "." + stamp;
  for (int n = 2; std::find(p.sessions.begin(), p.sessions.end(), id) != p.sessions.end(); ++n) {
    id = nickname + "." + stamp + "-" + std::to_string(n);
  }
  p.sessions.push_back(id);
  save_locked(p);
  SessionEntry e;
  e.id = id;
  e.path = profile_dir(nickname) / (id.substr(nickname.size() + 1) + ".session.jsonl");
  e.started_at = started_at;
  return e;
}

std::filesystem::path ProfileStore::session_path(const std::string& session_id) const {
  const auto dot = session_id.find('.');
  if (dot == std::string::npos) throw Error(ErrorCode::UnknownSession, "bad session id '" + session_id + "'");
  const std::string nickname = session_id.substr(0, dot);
  const std::string stamp = session_id.substr(dot + 1);
  if (!valid_nickname(nickname) || stamp.find('/') != std::string::npos || stamp.find("..") != std::string::npos) {
    throw Error(ErrorCode::UnknownSession, "bad session id '" + session_id + "'");
  }
  const auto path = profile_dir(nickname) / (stamp + ".session.jsonl");
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
  return path;
}

std::vector<SessionEntry> ProfileStore::list_sessions(const std::string& nickname) const {
  PatientProfile p;
  {
    std::lock_guard lock(mu_);
    p = load_locked(nickname);
  }
  std::vector<SessionEntry> out;
  for (const auto& id : p.sessions) {
    const auto path = profile_dir(nickname) / (id.substr(nickname.size() + 1) + ".session.jsonl");
    if (!std::filesystem::exists(path)) continue;
    ReadReport report;
    SessionLog log;
    try {
      log = read_session(path, &report);
    } catch (const Error&) {
      continue;
    }
    SessionEntry e;
    e.id = id;
    e.path = path;
    e.started_at = log.header.started_at;
    e.footer_present = log.footer.has_value();
    e.stats = log.footer ? stats_from_json(log.footer->summary) : compute_stats(log);
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SessionEntry& a, const SessionEntry& b) { return a.started_at < b.started_at; });
  return out;
}

}  // namespace rehab
