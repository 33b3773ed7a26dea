#include "rehab/skeleton.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "rehab/error.hpp"

namespace rehab {
namespace {

constexpr double kMinSegment = 1e-6;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "spine_base", "spine_mid", "spine_shoulder", "neck",     "head",    "shoulder_l", "shoulder_r",
    "elbow_l",    "elbow_r",   "wrist_l",        "wrist_r",  "hand_l",  "hand_r",     "hand_tip_l",
    "hand_tip_r", "thumb_l",   "thumb_r",        "hip_l",    "hip_r",   "knee_l",     "knee_r",
    "ankle_l",    "ankle_r",   "foot_l",         "foot_r",
};

Vec3 checked_segment(const SkeletonFrame& frame, JointId from, JointId to) {
  const Vec3 v = frame[to] - frame[from];
  if (v.norm() < kMinSegment) {
    throw Error(ErrorCode::DegenerateSegment, std::string("degenerate segment ") +
                                                  std::string(joint_name(from)) + "->" +
                                                  std::string(joint_name(to)));
  }
  return v;
}

template <typename F>
std::optional<double> try_metric(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSegment) throw;
    return std::nullopt;
  }
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::CollinearSamples: return "CollinearSamples";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::PitchTooSmall: return "PitchTooSmall";
    case ErrorCode::InvalidDesignatedCell: return "InvalidDesignatedCell";
    case ErrorCode::InvalidCell: return "InvalidCell";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidPhase: return "InvalidPhase";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::EndOfStream: return "EndOfStream";
    case ErrorCode::OutOfOrderRecord: return "OutOfOrderRecord";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::DuplicateNickname: return "DuplicateNickname";
    case ErrorCode::InvalidNickname: return "InvalidNickname";
    case ErrorCode::UnknownNickname: return "UnknownNickname";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::InvalidMergedConfig: return "InvalidMergedConfig";
    case ErrorCode::InvalidSource: return "InvalidSource";
  }
  return "Unknown";
}

const std::array<JointId, kJointCount>& all_joints() {
  static const auto joints = [] {
    std::array<JointId, kJointCount> out{};
    for (std::size_t i = 0; i < kJointCount; ++i) out[i] = static_cast<JointId>(i);
    return out;
  }();
  return joints;
}

std::string_view joint_name(JointId id) { return kJointNames[index_of(id)]; }

std::optional<JointId> joint_from_name(std::string_view name) {
  const auto it = std::find(kJointNames.begin(), kJointNames.end(), name);
  if (it == kJointNames.end()) return std::nullopt;
  return static_cast<JointId>(it - kJointNames.begin());
}

bool SkeletonFrame::valid() const {
  if (t_ms < 0) return false;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (!joints[i].finite()) return false;
    if (!(confidence[i] >= 0.0 && confidence[i] <= 1.0)) return false;
  }
  return true;
}

double joint_angle(const SkeletonFrame& frame, JointId a, JointId vertex, JointId c) {
  const Vec3 va = checked_segment(frame, vertex, a);
  const Vec3 vc = checked_segment(frame, vertex, c);
  const double cosine = std::clamp(va.dot(vc) / (va.norm() * vc.norm()), -1.0, 1.0);
  return std::clamp(std::acos(cosine) * kRadToDeg, 0.0, 180.0);
}

double segment_tilt(const SkeletonFrame& frame, JointId left, JointId right) {
  const Vec3 v = checked_segment(frame, left, right);
  const double sine = std::clamp(v.y / v.norm(), -1.0, 1.0);
  return std::asin(sine) * kRadToDeg;
}

std::map<JointId, double> depth_offsets(const SkeletonFrame& frame, std::span<const JointId> joints) {
  std::map<JointId, double> out;
  const double base = frame[JointId::SpineBase].z;
  for (JointId j : joints) out[j] = frame[j].z - base;
  return out;
}

const std::array<JointId, 8>& depth_offset_joints() {
  static constexpr std::array<JointId, 8> joints = {
      JointId::ShoulderL, JointId::ShoulderR, JointId::HipL,   JointId::HipR,
      JointId::KneeL,     JointId::KneeR,     JointId::AnkleL, JointId::AnkleR,
  };
  return joints;
}

PostureMetrics posture_metrics(const SkeletonFrame& frame) {
  using J = JointId;
  PostureMetrics m;
  m.shoulder_tilt_deg = try_metric([&] { return segment_tilt(frame, J::ShoulderL, J::ShoulderR); });
  m.hip_tilt_deg = try_metric([&] { return segment_tilt(frame, J::HipL, J::HipR); });
  m.knee_l_deg = try_metric([&] { return joint_angle(frame, J::HipL, J::KneeL, J::AnkleL); });
  m.knee_r_deg = try_metric([&] { return joint_angle(frame, J::HipR, J::KneeR, J::AnkleR); });
  m.ankle_l_deg = try_metric([&] { return joint_angle(frame, J::KneeL, J::AnkleL, J::FootL); });
  m.ankle_r_deg = try_metric([&] { return joint_angle(frame, J::KneeR, J::AnkleR, J::FootR); });
  m.depth_offsets = depth_offsets(frame, depth_offset_joints());
  return m;
}

}  // namespace rehab
