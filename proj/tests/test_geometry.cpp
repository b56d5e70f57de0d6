#include "dsnerf/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dsnerf;

namespace {

Quat random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

// Rotation matrices agree up to the q / -q double cover.
double matrix_gap(const Quat& a, const Quat& b) { return (a.to_matrix() - b.to_matrix()).cwiseAbs().maxCoeff(); }

Mat3 rot_z(double angle) {
  Mat3 m;
  m << std::cos(angle), -std::sin(angle), 0, std::sin(angle), std::cos(angle), 0, 0, 0, 1;
  return m;
}

}  // namespace

TEST(Quat, MultiplicationMatchesMatrixProduct) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Quat a = random_unit(rng);
    const Quat b = random_unit(rng);
    EXPECT_LT(((a * b).to_matrix() - a.to_matrix() * b.to_matrix()).cwiseAbs().maxCoeff(), 1e-12);
    const Vec3 v(0.3, -1.2, 2.0);
    EXPECT_LT((a.rotate(v) - a.to_matrix() * v).norm(), 1e-12);
  }
}

TEST(Quat, FromMatrixRoundTrip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Quat q = random_unit(rng);
    EXPECT_LT(matrix_gap(Quat::from_matrix(q.to_matrix()), q), 1e-12);
  }
}

TEST(Slerp, IdentityCase) {
  std::mt19937_64 rng(3);
  const Quat q = random_unit(rng);
  const Quat r = quat_slerp(q, q, 0.5);
  EXPECT_NEAR(std::abs(r.dot(q)), 1.0, 1e-12);
}

TEST(Slerp, Endpoints) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Quat a = random_unit(rng);
    const Quat b = random_unit(rng);
    EXPECT_LT(matrix_gap(quat_slerp(a, b, 0.0), a), 1e-12);
    EXPECT_LT(matrix_gap(quat_slerp(a, b, 1.0), b), 1e-12);
  }
}

TEST(Slerp, HalfwayAboutZ) {
  const Quat qb = Quat::from_axis_angle(Vec3::UnitZ(), kPi / 2);
  const Quat r = quat_slerp(Quat::identity(), qb, 0.5);
  // Independently composed 45 degree rotation matrix.
  EXPECT_LT((r.to_matrix() - rot_z(kPi / 4)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(r.w, std::cos(kPi / 8), 1e-12);
  EXPECT_NEAR(r.z, std::sin(kPi / 8), 1e-12);
  EXPECT_NEAR(r.x, 0.0, 1e-15);
  EXPECT_NEAR(r.y, 0.0, 1e-15);
}

TEST(Slerp, TakesShorterArc) {
  const Quat qa = Quat::identity();
  const Quat qb = -Quat::from_axis_angle(Vec3::UnitX(), 0.4);  // same rotation, opposite hemisphere
  const Quat mid = quat_slerp(qa, qb, 0.5);
  EXPECT_NEAR(angular_distance(qa, mid), 0.2, 1e-12);
}

TEST(Slerp, NearlyIdenticalInputsStayUnit) {
  const Quat qa = Quat::from_axis_angle(Vec3::UnitY(), 0.3);
  const Quat qb = Quat::from_axis_angle(Vec3::UnitY(), 0.3 + 1e-10);
  for (double a : {0.0, 0.3, 0.7, 1.0}) EXPECT_NEAR(quat_slerp(qa, qb, a).norm(), 1.0, 1e-12);
}

TEST(Slerp, RejectsBadInputs) {
  EXPECT_THROW(quat_slerp(Quat{2, 0, 0, 0}, Quat::identity(), 0.5), std::invalid_argument);
  EXPECT_THROW(quat_slerp(Quat::identity(), Quat::identity(), 1.5), std::invalid_argument);
  EXPECT_THROW(quat_slerp(Quat::identity(), Quat::identity(), -0.1), std::invalid_argument);
}

TEST(InterpolatePose, AlphaZeroIsExact) {
  std::mt19937_64 rng(5);
  const CameraPose pa{{0.1, 0.2, 0.3}, random_unit(rng)};
  const CameraPose pb{{1, 2, 3}, random_unit(rng)};
  EXPECT_EQ(interpolate_pose(pa, pb, 0.0), pa);
}

TEST(InterpolatePose, LinearPosition) {
  const CameraPose pa{{0, 0, 0}, Quat::identity()};
  const CameraPose pb{{2, 0, 0}, Quat::identity()};
  const auto p = interpolate_pose(pa, pb, 0.25);
  EXPECT_NEAR((p.position - Vec3(0.5, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(InterpolatePose, MidpointIsGeodesicMidpoint) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const CameraPose pa{Vec3::Random(), random_unit(rng)};
    const CameraPose pb{Vec3::Random(), random_unit(rng)};
    const auto m = interpolate_pose(pa, pb, 0.5).orientation;
    // Angular distances from |dot| (independent of angular_distance()).
    const double da = 2.0 * std::acos(std::min(1.0, std::abs(m.dot(pa.orientation))));
    const double db = 2.0 * std::acos(std::min(1.0, std::abs(m.dot(pb.orientation))));
    EXPECT_NEAR(da, db, 1e-9);
    EXPECT_NEAR(angular_distance(m, pa.orientation), angular_distance(m, pb.orientation), 1e-9);
  }
}

TEST(UnobservedPoses, OnePairTwoViewsOnSegment) {
  std::mt19937_64 rng(7);
  const std::vector<CameraPose> obs{{{0, 0, 0}, random_unit(rng)}, {{1, 2, -1}, random_unit(rng)}};
  const auto out = generate_unobserved_poses(obs, 2, 11);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& ip : out) {
    EXPECT_GT(ip.alpha, 0.0);
    EXPECT_LT(ip.alpha, 1.0);
    const Vec3 ab = obs[1].position - obs[0].position;
    const Vec3 ap = ip.pose.position - obs[0].position;
    EXPECT_LT(ab.cross(ap).norm(), 1e-12);
    const double s = ap.dot(ab) / ab.squaredNorm();
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_EQ(ip.parent_a, 0);
    EXPECT_EQ(ip.parent_b, 1);
  }
  EXPECT_NE(out[0].alpha, out[1].alpha);
}

TEST(UnobservedPoses, IdenticalEndpoints) {
  const CameraPose p{{1, 1, 1}, Quat::from_axis_angle(Vec3(1, 2, 3), 0.7)};
  for (const auto& ip : generate_unobserved_poses({p, p}, 3, 1)) {
    EXPECT_LT((ip.pose.position - p.position).norm(), 1e-15);
    EXPECT_LT(matrix_gap(ip.pose.orientation, p.orientation), 1e-12);
  }
}

TEST(UnobservedPoses, DeterministicPerSeed) {
  std::mt19937_64 rng(8);
  std::vector<CameraPose> obs;
  for (int i = 0; i < 5; ++i) obs.push_back({Vec3::Random(), random_unit(rng)});
  const auto a = generate_unobserved_poses(obs, 2, 42);
  const auto b = generate_unobserved_poses(obs, 2, 42);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pose, b[i].pose);
    EXPECT_EQ(a[i].alpha, b[i].alpha);
  }
  EXPECT_TRUE(generate_unobserved_poses(obs, 0, 42).empty());
  EXPECT_TRUE(generate_unobserved_poses({obs[0]}, 2, 42).empty());
}

TEST(CameraPose, InverseAndCompose) {
  std::mt19937_64 rng(9);
  const CameraPose p{{0.5, -1, 2}, random_unit(rng)};
  const Vec3 x(0.3, 0.4, 5.0);
  EXPECT_LT((p.to_camera(p.to_world(x)) - x).norm(), 1e-12);
  const CameraPose id = p.compose(p.inverse());
  EXPECT_LT(id.position.norm(), 1e-12);
  EXPECT_LT(matrix_gap(id.orientation, Quat::identity()), 1e-12);
}

TEST(LookAt, ForwardAxisPointsAtTarget) {
  const Vec3 pos(0.2, -0.1, 0.3);
  const Vec3 target(1, 2, 3);
  const auto p = look_at(pos, target);
  EXPECT_LT((p.orientation.rotate(Vec3::UnitZ()) - (target - pos).normalized()).norm(), 1e-12);
  // Image rows run downwards in the world.
  EXPECT_LT(p.orientation.rotate(Vec3::UnitY()).dot(Vec3::UnitY()), 0.0);
}

TEST(Intrinsics, FromFovAndValidate) {
  const auto k = Intrinsics::from_fov(64, 32, 90.0);
  EXPECT_NEAR(k.fx, 32.0, 1e-12);
  EXPECT_DOUBLE_EQ(k.cx, 32.0);
  EXPECT_DOUBLE_EQ(k.cy, 16.0);
  EXPECT_NO_THROW(k.validate());
  Intrinsics bad = k;
  bad.fx = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
