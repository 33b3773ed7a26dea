#include "rehab/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "rehab/error.hpp"

namespace rehab {
namespace {

double quantize4(double v) {
  const double q = std::round(v * 1e4) / 1e4;
  return q == 0.0 ? 0.0 : q;
}

void append_fixed4(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  out += buf;
}

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string("field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) bad_config(std::string(where) + " must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) bad_config(std::string("unknown field '") + key + "' in " + where);
  }
}

Json vec_to_json(Vec3 v) { return Json::array({v.x, v.y, v.z}); }
Vec3 vec_from_json(const Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

Mechanic mechanic_from_string(std::string_view s) {
  if (s == "runner") return Mechanic::Runner;
  if (s == "grid_dance") return Mechanic::GridDance;
  bad_config("unknown mechanic '" + std::string(s) + "'");
}

ViewMode view_from_string(std::string_view s) {
  if (s == "third_person") return ViewMode::ThirdPerson;
  if (s == "mirrored") return ViewMode::Mirrored;
  bad_config("unknown view '" + std::string(s) + "'");
}

GridLayout layout_from_string(std::string_view s) {
  if (s == "line3") return GridLayout::Line3;
  if (s == "grid3x3") return GridLayout::Grid3x3;
  bad_config("unknown layout '" + std::string(s) + "'");
}

EndReason end_reason_from_string(std::string_view s) {
  for (EndReason r : {EndReason::Completed, EndReason::LivesExhausted, EndReason::AdaptiveStop,
                      EndReason::TherapistAbort}) {
    if (to_string(r) == s) return r;
  }
  bad_config("unknown end reason '" + std::string(s) + "'");
}

SkeletonFrame quantized(const SkeletonFrame& frame) {
  SkeletonFrame out = frame;
  for (auto& p : out.joints) p = {quantize4(p.x), quantize4(p.y), quantize4(p.z)};
  for (auto& c : out.confidence) c = quantize4(c);
  return out;
}

std::string frame_to_line(const SkeletonFrame& frame) {
  std::string out;
  out.reserve(1200);
  out += "{\"t\":";
  out += std::to_string(frame.t_ms);
  out += ",\"kind\":\"frame\",\"joints\":{";
  bool all_confident = true;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (i) out += ',';
    out += '"';
    out += joint_name(static_cast<JointId>(i));
    out += "\":[";
    append_fixed4(out, frame.joints[i].x);
    out += ',';
    append_fixed4(out, frame.joints[i].y);
    out += ',';
    append_fixed4(out, frame.joints[i].z);
    out += ']';
    if (frame.confidence[i] != 1.0) all_confident = false;
  }
  out += '}';
  if (!all_confident) {
    out += ",\"conf\":[";
    for (std::size_t i = 0; i < kJointCount; ++i) {
      if (i) out += ',';
      append_fixed4(out, frame.confidence[i]);
    }
    out += ']';
  }
  out += '}';
  return out;
}

SkeletonFrame frame_from_json(const Json& j) {
  try {
    SkeletonFrame frame;
    frame.t_ms = j.at("t").get<std::int64_t>();
    const Json& joints = j.at("joints");
    if (!joints.is_object() || joints.size() != kJointCount) {
      throw Error(ErrorCode::MalformedFrame, "frame must carry all 25 joints");
    }
    for (const auto& [name, value] : joints.items()) {
      const auto id = joint_from_name(name);
      if (!id) throw Error(ErrorCode::MalformedFrame, "unknown joint '" + name + "'");
      if (!value.is_array() || value.size() != 3) {
        throw Error(ErrorCode::MalformedFrame, "joint '" + name + "' needs three coordinates");
      }
      frame[*id] = vec_from_json(value);
    }
    frame.confidence.fill(1.0);
    if (j.contains("conf")) {
      const Json& conf = j.at("conf");
      if (!conf.is_array() || conf.size() != kJointCount) {
        throw Error(ErrorCode::MalformedFrame, "conf must have 25 entries");
      }
      for (std::size_t i = 0; i < kJointCount; ++i) frame.confidence[i] = conf[i].get<double>();
    }
    if (!frame.valid()) throw Error(ErrorCode::MalformedFrame, "frame violates joint or confidence ranges");
    return frame;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFrame, std::string("bad frame: ") + e.what());
  }
}

SkeletonFrame frame_from_line(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFrame, std::string("bad frame line: ") + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != "frame") {
    throw Error(ErrorCode::MalformedFrame, "line is not a frame record");
  }
  return frame_from_json(j);
}

Json cell_to_json(Cell c) { return Json::array({c.row, c.col}); }

Cell cell_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidCell, "cell must be [row, col]");
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

Json grid_to_json(const GridFrame& grid) {
  Json j;
  j["layout"] = to_string(grid.layout);
  j["origin"] = vec_to_json(grid.origin);
  j["basis_row"] = vec_to_json(grid.basis_row);
  j["basis_col"] = vec_to_json(grid.basis_col);
  j["tolerance_factor"] = grid.tolerance_factor;
  return j;
}

GridFrame grid_from_json(const Json& j) {
  try {
    GridFrame g;
    g.layout = layout_from_string(j.at("layout").get<std::string>());
    g.origin = vec_from_json(j.at("origin"));
    g.basis_row = vec_from_json(j.at("basis_row"));
    g.basis_col = vec_from_json(j.at("basis_col"));
    g.tolerance_factor = j.value("tolerance_factor", 0.5);
    return g;
  } catch (const nlohmann::json::exception& e) {
    bad_config(std::string("bad grid frame: ") + e.what());
  }
}

Json config_to_json(const GameConfig& c) {
  Json j;
  j["mechanic"] = to_string(c.mechanic);
  j["theme"] = to_string(c.theme);
  j["view"] = to_string(c.view);
  j["layout"] = to_string(c.layout);
  j["length"] = c.length;
  j["shift_time_s"] = c.shift_time_s;
  j["approach_time_s"] = c.approach_time_s;
  j["lives"] = c.lives ? Json(*c.lives) : Json(nullptr);
  j["seed"] = c.seed;
  j["adaptive"] = {
      {"ease_after_misses", c.adaptive.ease_after_misses},
      {"ease_factor", c.adaptive.ease_factor},
      {"ease_cap_factor", c.adaptive.ease_cap_factor},
      {"stop_after_misses", c.adaptive.stop_after_misses},
  };
  j["constraints"] = {
      {"forbid_repeat", c.constraints.forbid_repeat},
      {"max_step", c.constraints.max_step},
      {"spawn_interval_s", c.constraints.spawn_interval_s},
      {"safe_lane_change_prob", c.constraints.safe_lane_change_prob},
  };
  return j;
}

GameConfig config_from_json_unchecked(const Json& j) {
  reject_unknown(j,
                 {"mechanic", "theme", "view", "layout", "length", "shift_time_s", "approach_time_s",
                  "lives", "seed", "adaptive", "constraints"},
                 "config");
  GameConfig c;
  if (j.contains("mechanic")) {
    c.mechanic = mechanic_from_string(get_or<std::string>(j, "mechanic", ""));
    c.layout = c.mechanic == Mechanic::GridDance ? GridLayout::Grid3x3 : GridLayout::Line3;
  }
  if (j.contains("theme")) {
    const auto theme = get_or<std::string>(j, "theme", "");
    if (theme == "mage") {
      c.theme = Theme::Mage;
    } else if (theme == "bee") {
      c.theme = Theme::Bee;
    } else {
      bad_config("unknown theme '" + theme + "'");
    }
  }
  if (j.contains("view")) c.view = view_from_string(get_or<std::string>(j, "view", ""));
  if (j.contains("layout")) c.layout = layout_from_string(get_or<std::string>(j, "layout", ""));
  c.length = get_or(j, "length", c.length);
  c.shift_time_s = get_or(j, "shift_time_s", c.shift_time_s);
  c.approach_time_s = get_or(j, "approach_time_s", c.approach_time_s);
  if (j.contains("lives") && !j.at("lives").is_null()) c.lives = get_or(j, "lives", 0);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("adaptive")) {
    const Json& a = j.at("adaptive");
    reject_unknown(a, {"ease_after_misses", "ease_factor", "ease_cap_factor", "stop_after_misses"},
                   "adaptive");
    c.adaptive.ease_after_misses = get_or(a, "ease_after_misses", c.adaptive.ease_after_misses);
    c.adaptive.ease_factor = get_or(a, "ease_factor", c.adaptive.ease_factor);
    c.adaptive.ease_cap_factor = get_or(a, "ease_cap_factor", c.adaptive.ease_cap_factor);
    c.adaptive.stop_after_misses = get_or(a, "stop_after_misses", c.adaptive.stop_after_misses);
  }
  if (j.contains("constraints")) {
    const Json& g = j.at("constraints");
    reject_unknown(g, {"forbid_repeat", "max_step", "spawn_interval_s", "safe_lane_change_prob"},
                   "constraints");
    c.constraints.forbid_repeat = get_or(g, "forbid_repeat", c.constraints.forbid_repeat);
    c.constraints.max_step = get_or(g, "max_step", c.constraints.max_step);
    c.constraints.spawn_interval_s = get_or(g, "spawn_interval_s", c.constraints.spawn_interval_s);
    c.constraints.safe_lane_change_prob =
        get_or(g, "safe_lane_change_prob", c.constraints.safe_lane_change_prob);
  }
  return c;
}

GameConfig config_from_json(const Json& j) {
  GameConfig c = config_from_json_unchecked(j);
  c.validate();
  return c;
}

std::string_view event_type_name(const GameEventKind& kind) {
  return std::visit(
      [](const auto& e) -> std::string_view {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, event::TargetShown>) return "target_shown";
        else if constexpr (std::is_same_v<T, event::WaveSpawned>) return "wave_spawned";
        else if constexpr (std::is_same_v<T, event::Resolved>) return "resolved";
        else if constexpr (std::is_same_v<T, event::ScoreChanged>) return "score_changed";
        else if constexpr (std::is_same_v<T, event::DifficultyEased>) return "difficulty_eased";
        else if constexpr (std::is_same_v<T, event::LifeLost>) return "life_lost";
        else if constexpr (std::is_same_v<T, event::GameEnded>) return "game_ended";
        else return "feedback_cue";
      },
      kind);
}

Json event_to_json(const GameEventKind& kind) {
  Json j;
  j["type"] = event_type_name(kind);
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, event::TargetShown>) {
          j["round"] = e.round;
          j["cell"] = cell_to_json(e.cell);
          j["screen_cell"] = cell_to_json(e.screen_cell);
        } else if constexpr (std::is_same_v<T, event::WaveSpawned>) {
          j["wave"] = e.wave;
          j["safe_lane"] = e.safe_lane;
          j["screen_lane"] = e.screen_lane;
        } else if constexpr (std::is_same_v<T, event::Resolved>) {
          j["round"] = e.round;
          j["correct"] = e.correct;
          j["target"] = cell_to_json(e.target);
          j["player_cell"] = e.player_cell ? cell_to_json(*e.player_cell) : Json(nullptr);
        } else if constexpr (std::is_same_v<T, event::ScoreChanged>) {
          j["new_score"] = e.new_score;
        } else if constexpr (std::is_same_v<T, event::DifficultyEased>) {
          j["new_time_s"] = e.new_time_s;
        } else if constexpr (std::is_same_v<T, event::LifeLost>) {
          j["lives_remaining"] = e.lives_remaining;
        } else if constexpr (std::is_same_v<T, event::GameEnded>) {
          j["reason"] = to_string(e.reason);
        } else {
          j["positive"] = e.positive;
        }
      },
      kind);
  return j;
}

GameEventKind event_from_json(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "target_shown") {
    return event::TargetShown{j.at("round").get<int>(), cell_from_json(j.at("cell")),
                              cell_from_json(j.at("screen_cell"))};
  }
  if (type == "wave_spawned") {
    return event::WaveSpawned{j.at("wave").get<int>(), j.at("safe_lane").get<int>(),
                              j.at("screen_lane").get<int>()};
  }
  if (type == "resolved") {
    event::Resolved r;
    r.round = j.at("round").get<int>();
    r.correct = j.at("correct").get<bool>();
    r.target = cell_from_json(j.at("target"));
    if (!j.at("player_cell").is_null()) r.player_cell = cell_from_json(j.at("player_cell"));
    return r;
  }
  if (type == "score_changed") return event::ScoreChanged{j.at("new_score").get<int>()};
  if (type == "difficulty_eased") return event::DifficultyEased{j.at("new_time_s").get<double>()};
  if (type == "life_lost") return event::LifeLost{j.at("lives_remaining").get<int>()};
  if (type == "game_ended") {
    return event::GameEnded{end_reason_from_string(j.at("reason").get<std::string>())};
  }
  if (type == "feedback_cue") return event::FeedbackCue{j.at("positive").get<bool>()};
  throw Error(ErrorCode::MalformedFrame, "unknown event type '" + type + "'");
}

}  // namespace rehab
