#include "rehab/service.hpp"

#include <chrono>

#include <httplib.h>

#include "rehab/error.hpp"

namespace rehab {
namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json metrics_to_json(const PostureMetrics& m) {
  Json j;
  j["shoulder_tilt_deg"] = optional_number(m.shoulder_tilt_deg);
  j["hip_tilt_deg"] = optional_number(m.hip_tilt_deg);
  j["knee_l_deg"] = optional_number(m.knee_l_deg);
  j["knee_r_deg"] = optional_number(m.knee_r_deg);
  j["ankle_l_deg"] = optional_number(m.ankle_l_deg);
  j["ankle_r_deg"] = optional_number(m.ankle_r_deg);
  Json depth = Json::object();
  for (const auto& [joint, offset] : m.depth_offsets) depth[std::string(joint_name(joint))] = offset;
  j["depth_offsets"] = depth;
  return j;
}

Json error_body(const std::string& code, const std::string& message) {
  return Json{{"code", code}, {"message", message}};
}

void reply_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs a handler and maps domain errors onto {code, message} responses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    reply_json(res, http_status_for(e.code()), error_body(std::string(to_string(e.code())), e.what()));
  } catch (const nlohmann::json::exception& e) {
    reply_json(res, 400, error_body("BadRequest", e.what()));
  }
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  return Json::parse(req.body);
}

}  // namespace

Json message_to_json(const LiveMessage& m) {
  return Json{{"type", m.type}, {"seq", m.seq}, {"t_ms", m.t_ms}, {"payload", m.payload}};
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownNickname:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::DuplicateNickname:
    case ErrorCode::InvalidPhase:
      return 409;
    case ErrorCode::InvalidNickname:
    case ErrorCode::InvalidMergedConfig:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidCell:
    case ErrorCode::LayoutMismatch:
      return 422;
    case ErrorCode::StorageFailure:
      return 500;
    default:
      return 400;
  }
}

LiveController::LiveController(ProfileStore& store, std::unique_ptr<FrameSource> source, Options options)
    : store_(store), source_(std::move(source)), options_(options) {}

std::int64_t LiveController::now_ms() const {
  std::lock_guard lock(mu_);
  return tick_to_ms(tick_);
}

std::uint64_t LiveController::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

bool LiveController::game_running() const {
  std::lock_guard lock(mu_);
  return game_active_locked();
}

std::optional<std::string> LiveController::last_session_id() const {
  std::lock_guard lock(mu_);
  return session_id_;
}

bool LiveController::game_active_locked() const { return game_ && !game_->closed(); }

void LiveController::emit_locked(const std::string& type, Json payload) {
  outbox_.push_back({type, ++seq_, tick_to_ms(tick_), std::move(payload)});
  cv_.notify_all();
}

GridFrame LiveController::grid_for_locked(GridLayout layout) const {
  if (const auto it = calibrated_.find(layout); it != calibrated_.end()) return it->second;
  return default_grid(layout);
}

Json LiveController::snapshot_locked() const {
  Json s;
  s["nickname"] = nickname_ ? Json(*nickname_) : Json(nullptr);
  s["view"] = to_string(view_);
  Json grids = Json::array();
  for (const auto& [layout, grid] : calibrated_) grids.push_back(to_string(layout));
  s["calibrated_layouts"] = grids;
  if (calibration_) {
    const auto pending = calibration_->pending_cell();
    s["calibration"] = {{"layout", to_string(calibration_->layout())},
                        {"samples", calibration_->samples_taken()},
                        {"pending_cell", pending ? cell_to_json(*pending) : Json(nullptr)}};
  } else {
    s["calibration"] = nullptr;
  }
  if (!game_) {
    s["phase"] = "no_game";
    return s;
  }
  const GameEngine& engine = game_->engine();
  const GameState& st = engine.state();
  s["phase"] = to_string(st.phase);
  s["session_id"] = session_id_ ? Json(*session_id_) : Json(nullptr);
  s["mechanic"] = to_string(engine.config().mechanic);
  s["game_view"] = to_string(engine.config().view);
  s["score"] = st.score;
  s["countdown_s"] = optional_number(engine.countdown_s());
  s["effective_time_s"] = st.effective_time_s;
  s["lives"] = st.lives_remaining ? Json(*st.lives_remaining) : Json(nullptr);
  s["player_cell"] = st.player_cell ? cell_to_json(*st.player_cell) : Json(nullptr);
  if (st.current_target) {
    s["target"] = {{"cell", cell_to_json(*st.current_target)},
                   {"screen_cell", cell_to_json(screen_cell(*st.current_target, engine.config().view))}};
  } else {
    s["target"] = nullptr;
  }
  Json waves = Json::array();
  for (const auto& w : st.active_waves) {
    waves.push_back({{"wave", w.index},
                     {"safe_lane", w.wave.safe_lane},
                     {"screen_lane", screen_cell({0, w.wave.safe_lane}, engine.config().view).col},
                     {"remaining_s", static_cast<double>(w.resolve_tick - st.tick) / kTickHz}});
  }
  s["waves"] = waves;
  if (st.end_reason) s["end_reason"] = to_string(*st.end_reason);
  return s;
}

Json LiveController::snapshot() const {
  std::lock_guard lock(mu_);
  return snapshot_locked();
}

void LiveController::finish_game_locked() {
  if (!game_ || game_->closed()) return;
  game_->close();
  emit_locked("state", snapshot_locked());
}

void LiveController::step() {
  std::lock_guard lock(mu_);
  const std::int64_t t = tick_to_ms(tick_);
  std::optional<SkeletonFrame> frame = source_->poll(t);
  if (frame) last_frame_ = frame;

  if (calibration_ && frame) {
    if (calibration_->feed(*frame)) {
      const auto& sample = calibration_->samples().back();
      emit_locked("calib", {{"status", "sample"},
                            {"trigger", "hand_raise"},
                            {"cell", cell_to_json(sample.designated_cell)},
                            {"samples", calibration_->samples_taken()}});
      if (calibration_->complete()) {
        try {
          const GridFrame grid = calibration_->finish();
          calibrated_[grid.layout] = grid;
          if (auto* v = dynamic_cast<VirtualSource*>(source_.get())) v->set_grid(grid);
          emit_locked("calib", {{"status", "complete"}, {"grid", grid_to_json(grid)}});
        } catch (const Error& e) {
          emit_locked("calib", {{"status", "failed"}, {"code", to_string(e.code())}, {"message", e.what()}});
        }
        calibration_.reset();
      }
    }
  }

  if (game_active_locked()) {
    const bool warned = game_->storage_warning().has_value();
    for (const auto& e : game_->tick(frame)) {
      emit_locked("event", Json::parse(record_to_line(LogRecord::from_event(e))));
    }
    if (!warned && game_->storage_warning()) {
      emit_locked("error", {{"code", "StorageFailure"},
                            {"message", "recording disabled: " + *game_->storage_warning()}});
    }
    if (game_->finished()) finish_game_locked();
  }

  if (tick_ % options_.state_every_ticks == 0) emit_locked("state", snapshot_locked());
  if (frame && tick_ % options_.frame_every_ticks == 0) {
    emit_locked("frame", Json::parse(frame_to_line(*frame)));
  }
  ++tick_;

  const auto retention_ms = static_cast<std::int64_t>(options_.retention_s * 1000.0);
  while (!outbox_.empty() && outbox_.front().t_ms < tick_to_ms(tick_) - retention_ms) outbox_.pop_front();
}

MessageBatch LiveController::poll(std::uint64_t after, int wait_ms, bool include_frames) {
  std::unique_lock lock(mu_);
  if (wait_ms > 0) {
    cv_.wait_for(lock, std::chrono::milliseconds(wait_ms), [&] { return seq_ > after; });
  }
  MessageBatch batch;
  const std::uint64_t oldest = outbox_.empty() ? seq_ + 1 : outbox_.front().seq;
  if (after + 1 < oldest && after < seq_) batch.gap = {{after + 1, oldest - 1}};
  for (const auto& m : outbox_) {
    if (m.seq <= after) continue;
    if (!include_frames && m.type == "frame") continue;
    batch.messages.push_back(m);
  }
  return batch;
}

CommandResult LiveController::command(const Json& cmd) {
  std::lock_guard lock(mu_);
  const Json ack_seq = cmd.contains("seq") ? cmd.at("seq") : Json(nullptr);
  std::string type;
  try {
    type = cmd.at("type").get<std::string>();
    CommandResult r = dispatch_locked(type, cmd);
    r.ack["ack"] = ack_seq;
    r.ack["type"] = type;
    return r;
  } catch (const Error& e) {
    CommandResult r;
    r.ok = false;
    r.error = e.code();
    r.message = e.what();
    r.ack = {{"ack", ack_seq}, {"type", type}, {"code", to_string(e.code())}, {"message", e.what()}};
    emit_locked("error", r.ack);
    return r;
  } catch (const nlohmann::json::exception& e) {
    CommandResult r;
    r.ok = false;
    r.error = ErrorCode::InvalidConfig;
    r.message = e.what();
    r.ack = {{"ack", ack_seq}, {"type", type}, {"code", "InvalidConfig"}, {"message", e.what()}};
    emit_locked("error", r.ack);
    return r;
  }
}

CommandResult LiveController::dispatch_locked(const std::string& type, const Json& cmd) {
  CommandResult r;
  auto require_no_game = [&] {
    if (game_active_locked()) throw Error(ErrorCode::InvalidPhase, type + " is not allowed during a game");
  };
  auto require_game = [&] {
    if (!game_active_locked()) throw Error(ErrorCode::InvalidPhase, type + " needs a running game");
  };
  auto after_sample = [&](const char* trigger) {
    const auto& sample = calibration_->samples().back();
    emit_locked("calib", {{"status", "sample"},
                          {"trigger", trigger},
                          {"cell", cell_to_json(sample.designated_cell)},
                          {"samples", calibration_->samples_taken()}});
    if (!calibration_->complete()) return;
    try {
      const GridFrame grid = calibration_->finish();
      calibrated_[grid.layout] = grid;
      if (auto* v = dynamic_cast<VirtualSource*>(source_.get())) v->set_grid(grid);
      emit_locked("calib", {{"status", "complete"}, {"grid", grid_to_json(grid)}});
      calibration_.reset();
    } catch (const Error&) {
      calibration_.reset();
      throw;
    }
  };

  if (type == "start_session") {
    require_no_game();
    const std::string nick = cmd.at("nickname").get<std::string>();
    if (!store_.exists(nick)) throw Error(ErrorCode::UnknownNickname, "no profile '" + nick + "'");
    nickname_ = nick;
  } else if (type == "begin_calibration") {
    require_no_game();
    const GridLayout layout = layout_from_string(cmd.value("layout", "grid3x3"));
    calibration_.emplace(layout);
    if (last_frame_) calibration_->feed(*last_frame_);
    emit_locked("calib", {{"status", "started"},
                          {"layout", to_string(layout)},
                          {"pending_cell", cell_to_json(*calibration_->pending_cell())}});
  } else if (type == "confirm_position") {
    if (!calibration_) throw Error(ErrorCode::InvalidPhase, "no calibration in progress");
    if (!calibration_->confirm()) throw Error(ErrorCode::InvalidPhase, "no skeleton frame to confirm yet");
    after_sample("therapist");
  } else if (type == "add_sample_ack") {
    if (!calibration_) throw Error(ErrorCode::InvalidPhase, "no calibration in progress");
    const auto pending = calibration_->pending_cell();
    r.ack["samples"] = calibration_->samples_taken();
    r.ack["pending_cell"] = pending ? cell_to_json(*pending) : Json(nullptr);
  } else if (type == "set_view") {
    require_no_game();
    view_ = view_from_string(cmd.at("view").get<std::string>());
  } else if (type == "start_game") {
    require_no_game();
    if (!nickname_) throw Error(ErrorCode::InvalidPhase, "start_session first");
    if (calibration_) throw Error(ErrorCode::InvalidPhase, "calibration in progress");
    const Mechanic mechanic = mechanic_from_string(cmd.value("mechanic", "grid_dance"));
    GameConfig config = store_.effective_config(*nickname_, mechanic);
    config.view = view_;
    SessionHeader header;
    header.nickname = *nickname_;
    header.started_at = iso8601_now();
    header.seed = cmd.contains("seed")
                      ? cmd.at("seed").get<std::uint64_t>()
                      : static_cast<std::uint64_t>(
                            std::chrono::steady_clock::now().time_since_epoch().count());
    header.config = config;
    header.grid = grid_for_locked(config.layout);
    const SessionEntry entry = store_.register_session(*nickname_, header.started_at);
    game_ = std::make_unique<GameSession>(header, entry.path);
    game_->start();
    session_id_ = entry.id;
    r.ack["session_id"] = entry.id;
    r.ack["seed"] = header.seed;
    emit_locked("state", snapshot_locked());
  } else if (type == "pause") {
    require_game();
    game_->pause();
    emit_locked("state", snapshot_locked());
  } else if (type == "resume") {
    require_game();
    game_->resume();
    emit_locked("state", snapshot_locked());
  } else if (type == "abort") {
    require_game();
    for (const auto& e : game_->abort()) {
      emit_locked("event", Json::parse(record_to_line(LogRecord::from_event(e))));
    }
    finish_game_locked();
  } else if (type == "virtual_move") {
    auto* v = dynamic_cast<VirtualSource*>(source_.get());
    if (!v) throw Error(ErrorCode::InvalidSource, "virtual_move needs the virtual source");
    const Cell cell = cell_from_json(cmd.at("cell"));
    v->virtual_move(cell);
    if (game_active_locked()) game_->note(Marker{"virtual_move", "command", {{"cell", cell_to_json(cell)}}});
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown command '" + type + "'");
  }
  return r;
}

Service::Service(ProfileStore& store, std::unique_ptr<FrameSource> source, LiveController::Options options)
    : store_(store), controller_(store, std::move(source), options), server_(std::make_unique<httplib::Server>()) {
  routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::StorageFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Service::start(bool manual_ticks) {
  running_ = true;
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  if (!manual_ticks) {
    tick_thread_ = std::thread([this] {
      using clock = std::chrono::steady_clock;
      const auto period = std::chrono::nanoseconds(1'000'000'000 / kTickHz);
      auto next = clock::now();
      while (running_) {
        controller_.step();
        next += period;
        std::this_thread::sleep_until(next);
      }
    });
  }
  server_->wait_until_ready();
}

void Service::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (tick_thread_.joinable()) tick_thread_.join();
}

void Service::routes() {
  auto& s = *server_;

  s.Post("/profiles", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Json body = parse_body(req);
      const auto p = store_.create_profile(body.at("nickname").get<std::string>(), body.value("notes", ""));
      reply_json(res, 201, profile_to_json(p));
    });
  });

  s.Get("/profiles", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      Json list = Json::array();
      for (const auto& nick : store_.nicknames()) {
        const auto p = store_.load(nick);
        list.push_back({{"nickname", p.nickname}, {"created_at", p.created_at}, {"sessions", p.sessions.size()}});
      }
      reply_json(res, 200, list);
    });
  });

  s.Get(R"(/profiles/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string nick = req.matches[1];
      Json j = profile_to_json(store_.load(nick));
      j["effective"] = {{"grid_dance", config_to_json(store_.effective_config(nick, Mechanic::GridDance))},
                        {"runner", config_to_json(store_.effective_config(nick, Mechanic::Runner))}};
      reply_json(res, 200, j);
    });
  });

  s.Put(R"(/profiles/([^/]+)/config)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string nick = req.matches[1];
      const Mechanic mechanic =
          mechanic_from_string(req.has_param("mechanic") ? req.get_param_value("mechanic") : "grid_dance");
      Json body;
      try {
        body = parse_body(req);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidMergedConfig, e.what());
      }
      store_.set_overrides(nick, mechanic, body);
      reply_json(res, 200, config_to_json(store_.effective_config(nick, mechanic)));
    });
  });

  s.Get(R"(/profiles/([^/]+)/sessions)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      Json list = Json::array();
      for (const auto& e : store_.list_sessions(req.matches[1])) {
        list.push_back({{"id", e.id},
                        {"started_at", e.started_at},
                        {"footer_present", e.footer_present},
                        {"stats", stats_to_json(e.stats)}});
      }
      reply_json(res, 200, list);
    });
  });

  s.Get(R"(/profiles/([^/]+)/trends)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::vector<SessionRef> refs;
      for (const auto& e : store_.list_sessions(req.matches[1])) refs.push_back({e.id, e.started_at, e.stats});
      reply_json(res, 200, trends_to_json(profile_trends(refs)));
    });
  });

  s.Get(R"(/sessions/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const SessionLog log = read_session(store_.session_path(req.matches[1]));
      reply_json(res, 200, stats_to_json(compute_stats(log)));
    });
  });

  s.Get(R"(/sessions/([^/]+)/trace\.csv)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const SessionLog log = read_session(store_.session_path(req.matches[1]));
      res.status = 200;
      res.set_content(trace_to_csv(compute_posture_trace(log)), "text/csv");
    });
  });

  s.Get(R"(/sessions/([^/]+)/replay)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const SessionLog log = read_session(store_.session_path(req.matches[1]));
      const std::int64_t from = req.has_param("from_ms") ? std::stoll(req.get_param_value("from_ms")) : 0;
      const std::int64_t to = req.has_param("to_ms") ? std::stoll(req.get_param_value("to_ms"))
                                                     : std::numeric_limits<std::int64_t>::max();
      Json records = Json::array();
      for (const auto& item : replay_iterate(log, from, to)) {
        Json rec = Json::parse(record_to_line(*item.record));
        if (item.metrics) rec["metrics"] = metrics_to_json(*item.metrics);
        records.push_back(std::move(rec));
      }
      reply_json(res, 200, {{"header", Json::parse(header_to_line(log.header))}, {"records", records}});
    });
  });

  s.Get("/defaults", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      Json j = defaults_to_json(store_.defaults());
      j["schemas"] = {{"session_format_version", kSessionFormatVersion},
                      {"profile_schema_version", kProfileSchemaVersion},
                      {"defaults_format_version", kDefaultsFormatVersion},
                      {"live_protocol_version", kLiveProtocolVersion}};
      reply_json(res, 200, j);
    });
  });

  s.Post("/live/commands", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const CommandResult r = controller_.command(parse_body(req));
      if (r.ok) {
        reply_json(res, 200, r.ack);
      } else {
        reply_json(res, http_status_for(*r.error), r.ack);
      }
    });
  });

  s.Get("/live/messages", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::uint64_t after = req.has_param("after") ? std::stoull(req.get_param_value("after")) : 0;
      const int wait = req.has_param("wait_ms") ? std::min(5000, std::stoi(req.get_param_value("wait_ms"))) : 0;
      const std::string fv = req.has_param("frames") ? req.get_param_value("frames") : "1";
      const bool frames = fv != "0" && fv != "false";
      const MessageBatch batch = controller_.poll(after, wait, frames);
      Json msgs = Json::array();
      for (const auto& m : batch.messages) msgs.push_back(message_to_json(m));
      Json body{{"messages", msgs}};
      body["gap"] = batch.gap ? Json{{"from", batch.gap->first}, {"to", batch.gap->second}} : Json(nullptr);
      reply_json(res, 200, body);
    });
  });

  s.Get("/live/state", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, controller_.snapshot());
  });
}

}  // namespace rehab
