#pragma once

#include <atomic>
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
#include "rehab/prng.hpp"
#include "rehab/serialization.hpp"
#include "rehab/session_log.hpp"
#include "rehab/skeleton.hpp"

namespace rehab {

struct MovementStep {
  double time_s = 0.0;
  Cell cell;
  double transit_s = 0.0;
  double noise_std_m = 0.0;
  bool hands_up = false;  // raise a hand above the head while this step is active
};

struct MovementScript {
  std::vector<MovementStep> steps;
  // Added to the synthetic skeleton, e.g. {hip_l: (0,-0.05,0)} for one lower hip.
  std::map<JointId, Vec3> posture_offsets;
  std::optional<double> duration_s;  // end of stream; unbounded when absent

  // Throws InvalidConfig: needs at least one step, strictly increasing times, noise >= 0.
  void validate() const;
};

Json script_to_json(const MovementScript& script);
MovementScript script_from_json(const Json& j);

// Upright child-scale skeleton standing with its ankle midpoint on `floor_point`.
SkeletonFrame synthetic_skeleton(Vec3 floor_point, std::int64_t t_ms,
                                 const std::map<JointId, Vec3>& posture_offsets = {},
                                 bool hands_up = false);

enum class SourceKind { Scripted, ReplayFile, Network, Virtual };

// Frames are requested per engine tick. A source may have nothing for a tick
// (poll returns nullopt) without being exhausted.
class FrameSource {
 public:
  virtual ~FrameSource() = default;

  virtual SourceKind kind() const = 0;
  virtual std::optional<SkeletonFrame> poll(std::int64_t t_ms) = 0;
  virtual bool exhausted() const { return false; }
  virtual std::size_t malformed_count() const { return 0; }
  virtual std::size_t dropped_count() const { return 0; }

  // Frame on the source's own 30 Hz timeline; throws EndOfStream when exhausted.
  SkeletonFrame next_frame();

 private:
  std::int64_t next_tick_ = 0;
};

class ScriptedSource final : public FrameSource {
 public:
  ScriptedSource(MovementScript script, GridFrame grid, std::uint64_t noise_seed);

  SourceKind kind() const override { return SourceKind::Scripted; }
  std::optional<SkeletonFrame> poll(std::int64_t t_ms) override;
  bool exhausted() const override { return exhausted_; }

  // Noise-free floor point at time t.
  Vec3 planned_floor_point(double t_s) const;

 private:
  const MovementStep& active_step(double t_s) const;

  MovementScript script_;
  GridFrame grid_;
  std::vector<Vec3> step_origins_;
  Prng noise_;
  bool exhausted_ = false;
};

class ReplaySource final : public FrameSource {
 public:
  // Throws InvalidSource when speed_factor <= 0.
  ReplaySource(const SessionLog& log, double speed_factor = 1.0);

  SourceKind kind() const override { return SourceKind::ReplayFile; }
  // Returns the newest recorded frame at recording time t * speed_factor,
  // stamped with t; each recorded frame is yielded at most once.
  std::optional<SkeletonFrame> poll(std::int64_t t_ms) override;
  bool exhausted() const override { return next_ >= frames_.size(); }
  double speed_factor() const { return speed_factor_; }
  std::int64_t last_frame_ms() const { return frames_.empty() ? 0 : frames_.back().t_ms; }

 private:
  std::vector<SkeletonFrame> frames_;
  double speed_factor_;
  std::size_t next_ = 0;
};

class VirtualSource final : public FrameSource {
 public:
  explicit VirtualSource(GridFrame grid, std::optional<Cell> start = std::nullopt);

  SourceKind kind() const override { return SourceKind::Virtual; }
  std::optional<SkeletonFrame> poll(std::int64_t t_ms) override;

  // Throws InvalidCell. Last write before a frame boundary wins.
  void virtual_move(Cell cell);
  Cell current_cell() const;
  void set_grid(const GridFrame& grid);

 private:
  mutable std::mutex mu_;
  GridFrame grid_;
  Cell cell_;
};

// Accepts one TCP client at a time and reads newline-delimited frame records.
// Frames are queued (bounded, oldest dropped) and restamped with the tick time.
class NetworkSource final : public FrameSource {
 public:
  // endpoint "host:port"; port 0 picks a free port. Throws InvalidSource.
  explicit NetworkSource(const std::string& endpoint, std::size_t queue_capacity = 64);
  ~NetworkSource() override;

  SourceKind kind() const override { return SourceKind::Network; }
  std::optional<SkeletonFrame> poll(std::int64_t t_ms) override;
  std::size_t malformed_count() const override { return malformed_.load(); }
  std::size_t dropped_count() const override { return dropped_.load(); }

  int port() const { return port_; }
  std::size_t queued() const;

 private:
  void accept_loop();
  void push(SkeletonFrame frame);

  int listen_fd_ = -1;
  int port_ = 0;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<SkeletonFrame> queue_;
  std::atomic<std::size_t> malformed_{0};
  std::atomic<std::size_t> dropped_{0};
  std::atomic<bool> stop_{false};
  std::atomic<int> client_fd_{-1};
  std::thread thread_;
};

struct SourceDescriptor {
  SourceKind kind = SourceKind::Virtual;
  std::string path;        // Scripted script file or ReplayFile session file
  double speed_factor = 1.0;
  std::string endpoint;    // Network
};

// "virtual", "scripted:<file>", "replay:<file>[@speed]", "network:<host>:<port>".
// Throws InvalidSource.
SourceDescriptor parse_source_descriptor(const std::string& text);

// Throws InvalidSource or the file errors of the underlying loaders.
std::unique_ptr<FrameSource> open_source(const SourceDescriptor& descriptor, const GridFrame& grid,
                                         std::uint64_t noise_seed = 0);

}  // namespace rehab
