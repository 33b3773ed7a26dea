#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rehab/analytics.hpp"
#include "rehab/game.hpp"
#include "rehab/serialization.hpp"
#include "rehab/session_log.hpp"

namespace rehab {

inline constexpr int kProfileSchemaVersion = 1;
inline constexpr int kDefaultsFormatVersion = 1;

struct SystemDefaults {
  int format_version = kDefaultsFormatVersion;
  GameConfig runner;
  GameConfig grid_dance;

  static SystemDefaults builtin();
  const GameConfig& for_mechanic(Mechanic m) const { return m == Mechanic::Runner ? runner : grid_dance; }

  friend bool operator==(const SystemDefaults&, const SystemDefaults&) = default;
};

Json defaults_to_json(const SystemDefaults& d);
// Throws InvalidConfig / VersionUnsupported.
SystemDefaults defaults_from_json(const Json& j);
// Path of the defaults.json shipped with the project.
std::filesystem::path shipped_defaults_path();

// Nickname is the only identity; the schema has no personal-data fields.
struct PatientProfile {
  std::string nickname;
  std::string created_at;
  std::string notes;
  std::map<Mechanic, Json> overrides;  // partial GameConfig objects
  std::vector<std::string> sessions;   // session ids, chronological

  friend bool operator==(const PatientProfile&, const PatientProfile&) = default;
};

Json profile_to_json(const PatientProfile& p);
// Rejects unknown fields.
PatientProfile profile_from_json(const Json& j);

bool valid_nickname(const std::string& nickname);

// defaults overlaid field-wise with the profile's overrides. Throws InvalidMergedConfig.
GameConfig merge_config(const SystemDefaults& defaults, const PatientProfile& profile, Mechanic mechanic);

struct SessionEntry {
  std::string id;  // "<nickname>.<compact start time>"
  std::filesystem::path path;
  std::string started_at;
  SessionStats stats;
  bool footer_present = false;
};

// One directory per nickname holding profile.json and *.session.jsonl files,
// plus defaults.json at the root. Mutations are serialized internally.
class ProfileStore {
 public:
  // Creates the root and writes defaults.json from the built-in set if missing.
  explicit ProfileStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  SystemDefaults defaults() const;

  // Throws InvalidNickname / DuplicateNickname.
  PatientProfile create_profile(const std::string& nickname, const std::string& notes = "");
  // Throws UnknownNickname.
  PatientProfile load(const std::string& nickname) const;
  std::vector<std::string> nicknames() const;
  bool exists(const std::string& nickname) const;

  // Replaces the override delta for one mechanic after validating the merge.
  // Throws UnknownNickname / InvalidMergedConfig.
  PatientProfile set_overrides(const std::string& nickname, Mechanic mechanic, const Json& delta);
  GameConfig effective_config(const std::string& nickname, Mechanic mechanic) const;

  // Reserves a session file for a new recording and adds it to the index.
  SessionEntry register_session(const std::string& nickname, const std::string& started_at);
  std::vector<SessionEntry> list_sessions(const std::string& nickname) const;
  // Throws UnknownSession.
  std::filesystem::path session_path(const std::string& session_id) const;

 private:
  std::filesystem::path profile_dir(const std::string& nickname) const { return root_ / nickname; }
  PatientProfile load_locked(const std::string& nickname) const;
  void save_locked(const PatientProfile& profile);

  std::filesystem::path root_;
  mutable std::mutex mu_;
};

}  // namespace rehab
