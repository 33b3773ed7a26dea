#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "rehab/error.hpp"
#include "rehab/serialization.hpp"
#include "rehab/skeleton.hpp"

using namespace rehab;

namespace {

SkeletonFrame blank() {
  SkeletonFrame f;
  f.confidence.fill(1.0);
  return f;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

TEST_SUITE("skeleton") {

TEST_CASE("joint angle examples") {
  auto f = blank();
  f[JointId::HipL] = {0, 1, 0};
  f[JointId::KneeL] = {0, 0.5, 0};
  f[JointId::AnkleL] = {0, 0, 0};
  CHECK(joint_angle(f, JointId::HipL, JointId::KneeL, JointId::AnkleL) == doctest::Approx(180.0).epsilon(1e-12));

  f[JointId::KneeL] = {0, 0, 0};
  f[JointId::AnkleL] = {1, 0, 0};
  CHECK(joint_angle(f, JointId::HipL, JointId::KneeL, JointId::AnkleL) == doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("joint angle degenerate segment throws") {
  auto f = blank();
  f[JointId::HipL] = {0, 1, 0};
  f[JointId::KneeL] = {0, 1, 0};
  f[JointId::AnkleL] = {0, 0, 0};
  try {
    joint_angle(f, JointId::HipL, JointId::KneeL, JointId::AnkleL);
    FAIL("expected DegenerateSegment");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateSegment);
  }
}

TEST_CASE("joint angle random triples against arccos oracle") {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    auto f = blank();
    const Vec3 a{u(rng), u(rng), u(rng)}, v{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
    f[JointId::HipR] = a;
    f[JointId::KneeR] = v;
    f[JointId::AnkleR] = c;
    const Vec3 p = a - v, q = c - v;
    const double cosv = std::clamp(p.dot(q) / (p.norm() * q.norm()), -1.0, 1.0);
    CHECK(std::abs(joint_angle(f, JointId::HipR, JointId::KneeR, JointId::AnkleR) - deg(std::acos(cosv))) < 1e-9);
  }
}

TEST_CASE("joint angle is symmetric in its outer joints") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    auto f = blank();
    f[JointId::HipL] = {u(rng), u(rng), u(rng)};
    f[JointId::KneeL] = {u(rng), u(rng), u(rng)};
    f[JointId::AnkleL] = {u(rng), u(rng), u(rng)};
    CHECK(joint_angle(f, JointId::HipL, JointId::KneeL, JointId::AnkleL) ==
          joint_angle(f, JointId::AnkleL, JointId::KneeL, JointId::HipL));
  }
}

TEST_CASE("segment tilt examples") {
  auto f = blank();
  f[JointId::ShoulderL] = {-0.2, 1.4, 2};
  f[JointId::ShoulderR] = {0.2, 1.4, 2};
  CHECK(segment_tilt(f, JointId::ShoulderL, JointId::ShoulderR) == 0.0);
  f[JointId::ShoulderR] = {0.2, 1.6, 2};
  CHECK(segment_tilt(f, JointId::ShoulderL, JointId::ShoulderR) == doctest::Approx(26.565051177077994).epsilon(1e-12));
  // antisymmetric under swapping the ends
  CHECK(segment_tilt(f, JointId::ShoulderR, JointId::ShoulderL) == doctest::Approx(-26.565051177077994).epsilon(1e-12));
}

TEST_CASE("depth offsets") {
  auto f = blank();
  for (auto& j : f.joints) j = {0.1, 1.0, 2.0};
  for (const auto& [joint, off] : depth_offsets(f, depth_offset_joints())) CHECK(off == 0.0);
  f[JointId::KneeL].z = 2.3;
  const JointId knee[] = {JointId::KneeL};
  CHECK(depth_offsets(f, knee).at(JointId::KneeL) == doctest::Approx(0.3).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  for (int i = 0; i < 100; ++i) {
    for (auto& j : f.joints) j = {u(rng), u(rng), u(rng)};
    const auto offs = depth_offsets(f, depth_offset_joints());
    for (const JointId j : depth_offset_joints()) CHECK(offs.at(j) == f[j].z - f[JointId::SpineBase].z);
  }
}

TEST_CASE("posture metrics upright symmetric") {
  auto f = blank();
  for (auto& j : f.joints) j = {0, 1, 2};
  f[JointId::ShoulderL] = {-0.2, 1.4, 2};
  f[JointId::ShoulderR] = {0.2, 1.4, 2};
  f[JointId::HipL] = {-0.1, 0.9, 2};
  f[JointId::HipR] = {0.1, 0.9, 2};
  f[JointId::KneeL] = {-0.1, 0.5, 2};
  f[JointId::KneeR] = {0.1, 0.5, 2};
  f[JointId::AnkleL] = {-0.1, 0.1, 2};
  f[JointId::AnkleR] = {0.1, 0.1, 2};
  f[JointId::FootL] = {-0.1, 0.0, 1.9};
  f[JointId::FootR] = {0.1, 0.0, 1.9};
  const auto m = posture_metrics(f);
  CHECK(*m.shoulder_tilt_deg == 0.0);
  CHECK(*m.hip_tilt_deg == 0.0);
  CHECK(*m.knee_l_deg == doctest::Approx(180.0));
  CHECK(*m.knee_r_deg == doctest::Approx(180.0));
  REQUIRE(m.ankle_l_deg);
}

TEST_CASE("posture metrics with knee on the hip leaves the knee angle empty") {
  auto f = blank();
  for (std::size_t i = 0; i < kJointCount; ++i) f.joints[i] = {0.01 * double(i), 0.05 * double(i), 2.0};
  f[JointId::KneeL] = f[JointId::HipL];
  const auto m = posture_metrics(f);
  CHECK_FALSE(m.knee_l_deg);
  CHECK(m.knee_r_deg);
  CHECK(m.shoulder_tilt_deg);
  CHECK(m.hip_tilt_deg);
  CHECK(m.ankle_r_deg);
}

TEST_CASE("posture metrics of the recorded fixture match the golden file") {
  std::ifstream fin(REHAB_FIXTURE_DIR "/posture_frame.json");
  std::ifstream gin(REHAB_FIXTURE_DIR "/posture_golden.json");
  REQUIRE(fin);
  REQUIRE(gin);
  std::string line;
  std::getline(fin, line);
  const SkeletonFrame f = frame_from_line(line);
  const Json g = Json::parse(gin);
  const auto m = posture_metrics(f);
  CHECK(*m.shoulder_tilt_deg == doctest::Approx(g["shoulder_tilt_deg"].get<double>()).epsilon(1e-12));
  CHECK(*m.hip_tilt_deg == doctest::Approx(g["hip_tilt_deg"].get<double>()).epsilon(1e-12));
  CHECK(*m.knee_l_deg == doctest::Approx(g["knee_l_deg"].get<double>()).epsilon(1e-12));
  CHECK(*m.knee_r_deg == doctest::Approx(g["knee_r_deg"].get<double>()).epsilon(1e-12));
  CHECK(*m.ankle_l_deg == doctest::Approx(g["ankle_l_deg"].get<double>()).epsilon(1e-12));
  CHECK(*m.ankle_r_deg == doctest::Approx(g["ankle_r_deg"].get<double>()).epsilon(1e-12));
  for (const auto& [name, value] : g["depth_offsets"].items()) {
    CHECK(std::abs(m.depth_offsets.at(*joint_from_name(name)) - value.get<double>()) < 1e-12);
  }
}

TEST_CASE("joint names round trip") {
  for (const JointId j : all_joints()) CHECK(joint_from_name(joint_name(j)) == j);
  CHECK_FALSE(joint_from_name("tail"));
}

}
