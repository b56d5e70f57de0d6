#include "dsnerf/scene.hpp"
#include "dsnerf/synthscene.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

using namespace dsnerf;

TEST(SphereScene, CenterCameraSeesUnitDepth) {
  AnalyticScene scene;
  const auto k = Intrinsics::from_fov(16, 12, 80.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int rep = 0; rep < 5; ++rep) {
    const CameraPose pose{Vec3::Zero(), Quat{n(rng), n(rng), n(rng), n(rng)}.normalized()};
    const auto data = generate_dataset(scene, {pose}, k, SynthOptions{0, 0, 0});
    for (float d : data.depth_maps[0].values) EXPECT_NEAR(d, 1.0, 1e-6);
    EXPECT_TRUE(data.points.empty());
  }
}

TEST(SphereScene, SparseSamplesMatchDepthMaps) {
  AnalyticScene scene;
  const auto k = Intrinsics::from_fov(32, 32, 60.0);
  const auto data = generate_dataset(scene, arc_trajectory(scene.center, ArcTrajectory{4}), k, SynthOptions{600, 0, 2});
  ASSERT_FALSE(data.points.empty());
  for (const auto& p : data.points) {
    EXPECT_NEAR(p.position.norm(), 1.0, 1e-12);
    for (int v : p.visible_in) {
      const auto proj = project_point(p.position, data.poses[v], k);
      ASSERT_TRUE(proj);
      const auto t = analytic_depth(scene, data.poses[v], k, proj->pixel);
      ASSERT_TRUE(t);
      EXPECT_NEAR(*t, proj->depth, 1e-6);
    }
  }
}

TEST(SphereScene, RejectsCameraOutside) {
  AnalyticScene scene;
  EXPECT_THROW(generate_dataset(scene, {CameraPose{{2, 0, 0}, Quat::identity()}}, Intrinsics::from_fov(8, 8, 60)),
               std::invalid_argument);
}

TEST(Texture, DeterministicAndInRange) {
  AnalyticScene a, b;
  b.texture.seed = 8;
  std::mt19937_64 rng(3);
  bool differs = false;
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = a.sample_surface(rng);
    const Vec3 c = a.color_at(p);
    EXPECT_EQ(c, a.color_at(p));
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE(c.maxCoeff(), 1.0);
    differs |= c != b.color_at(p);
  }
  EXPECT_TRUE(differs);
}

TEST(TubeScene, StraightTubeIntersection) {
  AnalyticScene tube;
  tube.type = SurfaceType::Tube;
  tube.radius = 0.5;
  tube.bend_radius = 0.0;
  tube.axis = Vec3::UnitZ();
  EXPECT_NEAR(*tube.intersect(Vec3::Zero(), Vec3::UnitX()), 0.5, 1e-12);
  const Vec3 d = Vec3(1, 0, 1).normalized();
  EXPECT_NEAR(*tube.intersect(Vec3::Zero(), d), 0.5 * std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(tube.intersect(Vec3::Zero(), Vec3::UnitZ()));
  EXPECT_FALSE(tube.intersect(Vec3(1, 0, 0), Vec3::UnitX()));
}

TEST(TubeScene, BentTubeHitsWall) {
  AnalyticScene tube;
  tube.type = SurfaceType::Tube;
  tube.radius = 0.4;
  tube.bend_radius = 3.0;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const Vec3 o(3.0, 0.1, 0.05);
  for (int i = 0; i < 100; ++i) {
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    const auto t = tube.intersect(o, d);
    ASSERT_TRUE(t);
    EXPECT_NEAR(tube.inside_distance(o + *t * d), 0.0, 1e-9);
    // Every earlier point along the ray stays inside.
    for (double s = 0; s < *t; s += *t / 50) EXPECT_GT(tube.inside_distance(o + s * d), -1e-12);
  }
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(tube.inside_distance(tube.sample_surface(rng)), 0.0, 1e-12);
}

TEST(Split, SequenceOf833Frames) {
  const auto s = split_indices(833, 4, true);
  EXPECT_NEAR(static_cast<double>(s.train.size()), 104.0, 1.0);
  EXPECT_NEAR(static_cast<double>(s.test.size()), 104.0, 1.0);
  std::set<int> train(s.train.begin(), s.train.end());
  for (int t : s.test) EXPECT_FALSE(train.count(t));
  for (int f : s.train) EXPECT_EQ(f % 4, 0);
  const auto s2 = split_indices(424, 4, true);
  EXPECT_EQ(s2.train.size() + s2.test.size(), 106u);
}

TEST(Split, DivisorOneWithoutAlternationKeepsAll) {
  const auto s = split_indices(10, 1, false);
  EXPECT_EQ(s.train, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_TRUE(s.test.empty());
  EXPECT_THROW(split_indices(10, 0, true), std::invalid_argument);
  EXPECT_THROW(split_indices(3, 4, true), std::invalid_argument);
}

TEST(Split, SelectViewsRemapsVisibility) {
  AnalyticScene scene;
  const auto k = Intrinsics::from_fov(16, 16, 60.0);
  const auto data = generate_dataset(scene, arc_trajectory(scene.center, ArcTrajectory{6}), k, SynthOptions{300, 0, 1});
  const auto [train, test] = train_test_split(data, 1, true);
  EXPECT_EQ(train.view_count(), 3u);
  EXPECT_EQ(test.view_count(), 3u);
  EXPECT_EQ(train.frame_ids, (std::vector<int>{1, 3, 5}));
  train.validate();
  for (const auto& p : train.points) {
    for (int v : p.visible_in) {
      const auto proj = project_point(p.position, train.poses[v], k);
      ASSERT_TRUE(proj);
      EXPECT_TRUE(pixel_in_bounds(proj->pixel, k));
    }
  }
}

TEST(Trajectory, ArcStaysInsideAndLooksOutward) {
  AnalyticScene scene;
  ArcTrajectory a;
  a.count = 12;
  const auto poses = arc_trajectory(scene.center, a);
  ASSERT_EQ(poses.size(), 12u);
  for (const auto& p : poses) {
    EXPECT_TRUE(scene.contains(p.position));
    EXPECT_NEAR(p.orientation.norm(), 1.0, 1e-12);
  }
}

TEST(SceneIo, SaveLoadRoundTrip) {
  AnalyticScene scene;
  const auto k = Intrinsics::from_fov(16, 16, 60.0);
  const auto data = generate_dataset(scene, arc_trajectory(scene.center, ArcTrajectory{3}), k, SynthOptions{200, 0, 1});
  const auto dir = std::filesystem::temp_directory_path() / "dsnerf_scene_roundtrip";
  std::filesystem::remove_all(dir);
  save_scene(dir, data);
  const auto back = load_scene(dir);
  ASSERT_EQ(back.view_count(), data.view_count());
  EXPECT_EQ(back.points.size(), data.points.size());
  for (std::size_t v = 0; v < data.view_count(); ++v) {
    EXPECT_LT((back.poses[v].position - data.poses[v].position).norm(), 1e-12);
    // PNG quantises to 8 bits.
    for (std::size_t i = 0; i < data.images[v].values.size(); ++i) {
      EXPECT_NEAR(back.images[v].values[i], data.images[v].values[i], 0.5 / 255 + 1e-6);
    }
  }
  std::filesystem::remove_all(dir);
}
