#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rehab/calibration.hpp"
#include "rehab/error.hpp"
#include "rehab/input_source.hpp"
#include "rehab/profile_store.hpp"
#include "rehab/serialization.hpp"
#include "rehab/session_runner.hpp"

namespace httplib {
class Server;
}

namespace rehab {

inline constexpr int kLiveProtocolVersion = 1;

// Envelope {type, seq, t_ms, payload}; type is state, frame, event, calib or error.
struct LiveMessage {
  std::string type;
  std::uint64_t seq = 0;
  std::int64_t t_ms = 0;
  Json payload;
};

Json message_to_json(const LiveMessage& m);

struct MessageBatch {
  std::vector<LiveMessage> messages;
  // Set when messages after the client's cursor were evicted: [first, last] missing seqs.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> gap;
};

struct CommandResult {
  bool ok = true;
  Json ack;  // {"ack": <client seq or null>, ...}
  std::optional<ErrorCode> error;
  std::string message;
};

// All live state: calibration, the running game and the outbound message
// buffer. Advanced one tick at a time by step(); commands and polls may come
// from any thread and are serialized on one mutex.
class LiveController {
 public:
  struct Options {
    double retention_s = 10.0;
    int state_every_ticks = 3;  // 10 Hz
    int frame_every_ticks = 2;  // 15 Hz
  };

  LiveController(ProfileStore& store, std::unique_ptr<FrameSource> source)
      : LiveController(store, std::move(source), Options{}) {}
  LiveController(ProfileStore& store, std::unique_ptr<FrameSource> source, Options options);

  // Command JSON: {"type": ..., "seq": <optional client seq>, ...payload fields}.
  CommandResult command(const Json& command);

  void step();

  // Messages with seq > after. Blocks up to wait_ms for new ones.
  MessageBatch poll(std::uint64_t after, int wait_ms = 0, bool include_frames = true);

  Json snapshot() const;
  std::int64_t now_ms() const;
  std::uint64_t last_seq() const;
  bool game_running() const;
  // Id of the most recent recorded game, if any.
  std::optional<std::string> last_session_id() const;

 private:
  void emit_locked(const std::string& type, Json payload);
  Json snapshot_locked() const;
  CommandResult dispatch_locked(const std::string& type, const Json& cmd);
  bool game_active_locked() const;
  void finish_game_locked();
  GridFrame grid_for_locked(GridLayout layout) const;

  ProfileStore& store_;
  std::unique_ptr<FrameSource> source_;
  Options options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::int64_t tick_ = 0;
  std::uint64_t seq_ = 0;
  std::deque<LiveMessage> outbox_;

  std::optional<std::string> nickname_;
  ViewMode view_ = ViewMode::ThirdPerson;
  std::map<GridLayout, GridFrame> calibrated_;
  std::optional<CalibrationProcess> calibration_;
  std::unique_ptr<GameSession> game_;
  std::optional<std::string> session_id_;
  std::optional<SkeletonFrame> last_frame_;
};

int http_status_for(ErrorCode code);

// HTTP front end: REST resources plus the live channel as
// POST /live/commands and long-polled GET /live/messages.
class Service {
 public:
  Service(ProfileStore& store, std::unique_ptr<FrameSource> source,
          LiveController::Options options = LiveController::Options{});
  ~Service();

  // Binds; port 0 picks a free port. Returns the bound port. Throws StorageFailure on bind failure.
  int bind(const std::string& host, int port);
  // Serves in background threads and drives the controller at 30 Hz (unless manual_ticks).
  void start(bool manual_ticks = false);
  void stop();

  LiveController& controller() { return controller_; }

 private:
  void routes();

  ProfileStore& store_;
  LiveController controller_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::thread tick_thread_;
  std::atomic<bool> running_{false};
};

}  // namespace rehab
