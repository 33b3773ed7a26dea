#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>

namespace rehab {

// Sensor frame, meters: x right, y up, z depth away from the sensor.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  friend Vec3 operator*(Vec3 v, double s) { return s * v; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

enum class JointId : std::uint8_t {
  SpineBase,
  SpineMid,
  SpineShoulder,
  Neck,
  Head,
  ShoulderL,
  ShoulderR,
  ElbowL,
  ElbowR,
  WristL,
  WristR,
  HandL,
  HandR,
  HandTipL,
  HandTipR,
  ThumbL,
  ThumbR,
  HipL,
  HipR,
  KneeL,
  KneeR,
  AnkleL,
  AnkleR,
  FootL,
  FootR,
};

inline constexpr std::size_t kJointCount = 25;

const std::array<JointId, kJointCount>& all_joints();

// Stable serialization name, e.g. "spine_base", "knee_l".
std::string_view joint_name(JointId id);
std::optional<JointId> joint_from_name(std::string_view name);

inline constexpr std::size_t index_of(JointId id) { return static_cast<std::size_t>(id); }

struct SkeletonFrame {
  std::int64_t t_ms = 0;
  std::array<Vec3, kJointCount> joints{};
  std::array<double, kJointCount> confidence{};

  Vec3& operator[](JointId id) { return joints[index_of(id)]; }
  const Vec3& operator[](JointId id) const { return joints[index_of(id)]; }

  // t_ms >= 0, all joints finite, confidences in [0, 1].
  bool valid() const;

  friend bool operator==(const SkeletonFrame&, const SkeletonFrame&) = default;
};

// Angle at `vertex` between the segments to `a` and `c`, degrees in [0, 180].
// Throws DegenerateSegment when either segment is shorter than 1e-6 m.
double joint_angle(const SkeletonFrame& frame, JointId a, JointId vertex, JointId c);

// Signed elevation of the left->right segment above the horizontal plane, degrees.
// Positive when the right joint is higher.
double segment_tilt(const SkeletonFrame& frame, JointId left, JointId right);

// z_j - z_spine_base for each requested joint.
std::map<JointId, double> depth_offsets(const SkeletonFrame& frame, std::span<const JointId> joints);

// Joints whose depth offset is reported by posture_metrics.
const std::array<JointId, 8>& depth_offset_joints();

// A metric that hit a degenerate segment is left empty.
struct PostureMetrics {
  std::optional<double> shoulder_tilt_deg;
  std::optional<double> hip_tilt_deg;
  std::optional<double> knee_l_deg;
  std::optional<double> knee_r_deg;
  std::optional<double> ankle_l_deg;
  std::optional<double> ankle_r_deg;
  std::map<JointId, double> depth_offsets;

  friend bool operator==(const PostureMetrics&, const PostureMetrics&) = default;
};

PostureMetrics posture_metrics(const SkeletonFrame& frame);

}  // namespace rehab
