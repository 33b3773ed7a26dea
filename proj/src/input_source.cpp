#include "rehab/input_source.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

#include "rehab/error.hpp"

namespace rehab {
namespace {

// Child-scale standing pose, offsets from the ankle midpoint on the floor.
struct PoseJoint {
  JointId id;
  Vec3 offset;
};

constexpr PoseJoint kUprightPose[] = {
    {JointId::SpineBase, {0.0, 0.90, 0.0}},     {JointId::SpineMid, {0.0, 1.15, 0.0}},
    {JointId::SpineShoulder, {0.0, 1.40, 0.0}}, {JointId::Neck, {0.0, 1.48, 0.0}},
    {JointId::Head, {0.0, 1.60, 0.0}},          {JointId::ShoulderL, {-0.18, 1.40, 0.0}},
    {JointId::ShoulderR, {0.18, 1.40, 0.0}},    {JointId::ElbowL, {-0.22, 1.15, 0.0}},
    {JointId::ElbowR, {0.22, 1.15, 0.0}},       {JointId::WristL, {-0.24, 0.92, 0.0}},
    {JointId::WristR, {0.24, 0.92, 0.0}},       {JointId::HandL, {-0.24, 0.85, 0.0}},
    {JointId::HandR, {0.24, 0.85, 0.0}},        {JointId::HandTipL, {-0.24, 0.78, 0.0}},
    {JointId::HandTipR, {0.24, 0.78, 0.0}},     {JointId::ThumbL, {-0.21, 0.84, -0.03}},
    {JointId::ThumbR, {0.21, 0.84, -0.03}},     {JointId::HipL, {-0.10, 0.90, 0.0}},
    {JointId::HipR, {0.10, 0.90, 0.0}},         {JointId::KneeL, {-0.10, 0.50, 0.0}},
    {JointId::KneeR, {0.10, 0.50, 0.0}},        {JointId::AnkleL, {-0.10, 0.08, 0.0}},
    {JointId::AnkleR, {0.10, 0.08, 0.0}},       {JointId::FootL, {-0.10, 0.0, -0.12}},
    {JointId::FootR, {0.10, 0.0, -0.12}},
};

Vec3 lerp(Vec3 a, Vec3 b, double f) { return a + f * (b - a); }

double transit_fraction(double elapsed_s, double transit_s) {
  if (transit_s <= 0.0) return 1.0;
  return std::clamp(elapsed_s / transit_s, 0.0, 1.0);
}

[[noreturn]] void bad_source(const std::string& what) { throw Error(ErrorCode::InvalidSource, what); }

std::pair<std::string, int> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) bad_source("endpoint must be host:port, got '" + endpoint + "'");
  const std::string host = endpoint.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    bad_source("bad port in '" + endpoint + "'");
  }
  if (port < 0 || port > 65535) bad_source("port out of range in '" + endpoint + "'");
  return {host.empty() ? "0.0.0.0" : host, port};
}

}  // namespace

void MovementScript::validate() const {
  if (steps.empty()) throw Error(ErrorCode::InvalidConfig, "movement script needs at least one step");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0 && !(steps[i].time_s > steps[i - 1].time_s)) {
      throw Error(ErrorCode::InvalidConfig, "movement step times must be strictly increasing");
    }
    if (!(steps[i].noise_std_m >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_std_m must be >= 0");
    if (!(steps[i].transit_s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "transit_s must be >= 0");
  }
  if (duration_s && !(*duration_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "duration_s must be > 0");
}

Json script_to_json(const MovementScript& script) {
  Json j;
  Json steps = Json::array();
  for (const auto& s : script.steps) {
    Json step;
    step["time_s"] = s.time_s;
    step["cell"] = cell_to_json(s.cell);
    step["transit_s"] = s.transit_s;
    step["noise_std_m"] = s.noise_std_m;
    if (s.hands_up) step["hands_up"] = true;
    steps.push_back(step);
  }
  j["steps"] = steps;
  if (!script.posture_offsets.empty()) {
    Json posture = Json::object();
    for (const auto& [id, off] : script.posture_offsets) {
      posture[std::string(joint_name(id))] = Json::array({off.x, off.y, off.z});
    }
    j["posture"] = posture;
  }
  if (script.duration_s) j["duration_s"] = *script.duration_s;
  return j;
}

MovementScript script_from_json(const Json& j) {
  MovementScript script;
  try {
    for (const auto& s : j.at("steps")) {
      MovementStep step;
      step.time_s = s.at("time_s").get<double>();
      step.cell = cell_from_json(s.at("cell"));
      step.transit_s = s.value("transit_s", 0.0);
      step.noise_std_m = s.value("noise_std_m", 0.0);
      step.hands_up = s.value("hands_up", false);
      script.steps.push_back(step);
    }
    if (j.contains("posture")) {
      for (const auto& [name, off] : j.at("posture").items()) {
        const auto id = joint_from_name(name);
        if (!id) throw Error(ErrorCode::InvalidConfig, "unknown joint '" + name + "' in posture");
        script.posture_offsets[*id] = {off.at(0).get<double>(), off.at(1).get<double>(),
                                       off.at(2).get<double>()};
      }
    }
    if (j.contains("duration_s") && !j.at("duration_s").is_null()) {
      script.duration_s = j.at("duration_s").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad movement script: ") + e.what());
  }
  script.validate();
  return script;
}

SkeletonFrame synthetic_skeleton(Vec3 floor_point, std::int64_t t_ms,
                                 const std::map<JointId, Vec3>& posture_offsets, bool hands_up) {
  SkeletonFrame frame;
  frame.t_ms = t_ms;
  frame.confidence.fill(1.0);
  const Vec3 base{floor_point.x, 0.0, floor_point.z};
  for (const auto& [id, offset] : kUprightPose) frame[id] = base + offset;
  if (hands_up) {
    frame[JointId::HandR] = base + Vec3{0.20, 1.85, 0.0};
    frame[JointId::HandTipR] = base + Vec3{0.20, 1.92, 0.0};
    frame[JointId::WristR] = base + Vec3{0.20, 1.78, 0.0};
  }
  for (const auto& [id, offset] : posture_offsets) frame[id] = frame[id] + offset;
  return quantized(frame);
}

SkeletonFrame FrameSource::next_frame() {
  while (!exhausted()) {
    const std::int64_t t = tick_to_ms(next_tick_++);
    if (auto frame = poll(t)) return *frame;
  }
  throw Error(ErrorCode::EndOfStream, "source exhausted");
}

ScriptedSource::ScriptedSource(MovementScript script, GridFrame grid, std::uint64_t noise_seed)
    : script_(std::move(script)), grid_(grid), noise_(noise_seed) {
  script_.validate();
  for (const auto& step : script_.steps) {
    if (!is_valid_cell(grid_.layout, step.cell)) {
      throw Error(ErrorCode::InvalidCell, "script step targets a cell outside the layout");
    }
  }
  step_origins_.push_back(grid_.cell_center(script_.steps.front().cell));
  for (std::size_t i = 1; i < script_.steps.size(); ++i) {
    const auto& prev = script_.steps[i - 1];
    const double f = transit_fraction(script_.steps[i].time_s - prev.time_s, prev.transit_s);
    step_origins_.push_back(lerp(step_origins_[i - 1], grid_.cell_center(prev.cell), f));
  }
}

const MovementStep& ScriptedSource::active_step(double t_s) const {
  std::size_t i = 0;
  while (i + 1 < script_.steps.size() && script_.steps[i + 1].time_s <= t_s) ++i;
  return script_.steps[i];
}

Vec3 ScriptedSource::planned_floor_point(double t_s) const {
  const auto& first = script_.steps.front();
  if (t_s < first.time_s) return grid_.cell_center(first.cell);
  const MovementStep& step = active_step(t_s);
  const std::size_t i = static_cast<std::size_t>(&step - script_.steps.data());
  const double f = transit_fraction(t_s - step.time_s, step.transit_s);
  return lerp(step_origins_[i], grid_.cell_center(step.cell), f);
}

std::optional<SkeletonFrame> ScriptedSource::poll(std::int64_t t_ms) {
  const double t_s = static_cast<double>(t_ms) / 1000.0;
  if (script_.duration_s && t_s > *script_.duration_s) {
    exhausted_ = true;
    return std::nullopt;
  }
  const MovementStep& step = active_step(t_s);
  // Always draw so the noise stream does not depend on the noise level.
  const double nx = noise_.next_gaussian();
  const double nz = noise_.next_gaussian();
  Vec3 floor = planned_floor_point(t_s);
  floor.x += step.noise_std_m * nx;
  floor.z += step.noise_std_m * nz;
  const bool hands_up = step.hands_up && t_s >= step.time_s;
  return synthetic_skeleton(floor, t_ms, script_.posture_offsets, hands_up);
}

ReplaySource::ReplaySource(const SessionLog& log, double speed_factor) : speed_factor_(speed_factor) {
  if (!(speed_factor > 0.0)) bad_source("speed_factor must be positive");
  for (const auto& r : log.records) {
    if (r.is_frame()) frames_.push_back(r.frame());
  }
}

std::optional<SkeletonFrame> ReplaySource::poll(std::int64_t t_ms) {
  const auto recording_ms = static_cast<std::int64_t>(std::floor(static_cast<double>(t_ms) * speed_factor_));
  std::optional<std::size_t> newest;
  while (next_ < frames_.size() && frames_[next_].t_ms <= recording_ms) newest = next_++;
  if (!newest) return std::nullopt;
  SkeletonFrame frame = frames_[*newest];
  frame.t_ms = t_ms;
  return frame;
}

VirtualSource::VirtualSource(GridFrame grid, std::optional<Cell> start) : grid_(grid) {
  cell_ = start.value_or(grid.layout == GridLayout::Line3 ? Cell{0, 1} : Cell{1, 1});
  if (!is_valid_cell(grid_.layout, cell_)) throw Error(ErrorCode::InvalidCell, "start cell outside layout");
}

std::optional<SkeletonFrame> VirtualSource::poll(std::int64_t t_ms) {
  std::lock_guard lock(mu_);
  return synthetic_skeleton(grid_.cell_center(cell_), t_ms);
}

void VirtualSource::virtual_move(Cell cell) {
  std::lock_guard lock(mu_);
  if (!is_valid_cell(grid_.layout, cell)) {
    throw Error(ErrorCode::InvalidCell, "cell (" + std::to_string(cell.row) + "," +
                                            std::to_string(cell.col) + ") is outside the layout");
  }
  cell_ = cell;
}

Cell VirtualSource::current_cell() const {
  std::lock_guard lock(mu_);
  return cell_;
}

void VirtualSource::set_grid(const GridFrame& grid) {
  std::lock_guard lock(mu_);
  grid_ = grid;
  if (!is_valid_cell(grid_.layout, cell_)) cell_ = grid.layout == GridLayout::Line3 ? Cell{0, 1} : Cell{1, 1};
}

NetworkSource::NetworkSource(const std::string& endpoint, std::size_t queue_capacity)
    : capacity_(std::max<std::size_t>(1, queue_capacity)) {
  const auto [host, port] = split_endpoint(endpoint);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) bad_source("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    bad_source("cannot parse host '" + host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 1) != 0) {
    ::close(listen_fd_);
    bad_source("cannot listen on " + endpoint + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { accept_loop(); });
}

NetworkSource::~NetworkSource() {
  stop_ = true;
  if (const int fd = client_fd_.load(); fd >= 0) ::shutdown(fd, SHUT_RDWR);
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
}

void NetworkSource::accept_loop() {
  while (!stop_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    client_fd_ = fd;
    std::string pending;
    char buf[4096];
    while (!stop_) {
      pollfd cfd{fd, POLLIN, 0};
      if (::poll(&cfd, 1, 100) <= 0) continue;
      const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
      if (n <= 0) break;
      pending.append(buf, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = pending.find('\n')) != std::string::npos) {
        const std::string line = pending.substr(0, nl);
        pending.erase(0, nl + 1);
        if (line.empty()) continue;
        try {
          push(frame_from_line(line));
        } catch (const Error&) {
          ++malformed_;
        }
      }
    }
    client_fd_ = -1;
    ::close(fd);
  }
}

void NetworkSource::push(SkeletonFrame frame) {
  std::lock_guard lock(mu_);
  if (queue_.size() >= capacity_) {
    queue_.pop_front();
    ++dropped_;
  }
  queue_.push_back(std::move(frame));
}

std::optional<SkeletonFrame> NetworkSource::poll(std::int64_t t_ms) {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  SkeletonFrame frame = std::move(queue_.front());
  queue_.pop_front();
  frame.t_ms = t_ms;
  return quantized(frame);
}

std::size_t NetworkSource::queued() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

SourceDescriptor parse_source_descriptor(const std::string& text) {
  SourceDescriptor d;
  if (text == "virtual") {
    d.kind = SourceKind::Virtual;
    return d;
  }
  const auto colon = text.find(':');
  if (colon == std::string::npos) bad_source("unknown source '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string rest = text.substr(colon + 1);
  if (rest.empty()) bad_source("source '" + text + "' needs an argument");
  if (kind == "scripted") {
    d.kind = SourceKind::Scripted;
    d.path = rest;
  } else if (kind == "replay") {
    d.kind = SourceKind::ReplayFile;
    const auto at = rest.rfind('@');
    d.path = rest.substr(0, at);
    if (at != std::string::npos) {
      try {
        d.speed_factor = std::stod(rest.substr(at + 1));
      } catch (const std::exception&) {
        bad_source("bad speed factor in '" + text + "'");
      }
      if (!(d.speed_factor > 0.0)) bad_source("speed factor must be positive");
    }
  } else if (kind == "network") {
    d.kind = SourceKind::Network;
    d.endpoint = rest;
    split_endpoint(rest);
  } else {
    bad_source("unknown source kind '" + kind + "'");
  }
  return d;
}

std::unique_ptr<FrameSource> open_source(const SourceDescriptor& d, const GridFrame& grid,
                                         std::uint64_t noise_seed) {
  switch (d.kind) {
    case SourceKind::Virtual:
      return std::make_unique<VirtualSource>(grid);
    case SourceKind::Scripted: {
      std::ifstream in(d.path);
      if (!in) throw Error(ErrorCode::StorageFailure, "cannot open script " + d.path);
      Json j;
      try {
        j = Json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad script JSON: ") + e.what());
      }
      return std::make_unique<ScriptedSource>(script_from_json(j), grid, noise_seed);
    }
    case SourceKind::ReplayFile:
      return std::make_unique<ReplaySource>(read_session(d.path), d.speed_factor);
    case SourceKind::Network:
      return std::make_unique<NetworkSource>(d.endpoint);
  }
  bad_source("unsupported source");
}

}  // namespace rehab
