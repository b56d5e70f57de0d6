#include "dsnerf/evalsuite.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace dsnerf;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 60;
  c.rays = {32, 16, 16};
  c.regen_interval = 20;
  c.samples_per_ray = 16;
  c.checkpoint_every = 0;
  c.field.trunk_layers = 2;
  c.field.trunk_width = 16;
  c.field.head_width = 8;
  c.field.pos_freqs = 3;
  c.field.dir_freqs = 1;
  c.optimizer.learning_rate = 5e-3;
  return c;
}

std::pair<SceneBundle, SceneBundle> tiny_split() {
  BenchmarkGeometry g;
  g.trajectory.count = 6;
  g.resolution = 16;
  const auto b = sphere_benchmark(0, g);
  return {b.train, b.test};
}

std::filesystem::path scratch(const char* name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Ablation, ConfigsDifferOnlyInLossActivation) {
  auto base = tiny_config();
  base.k_unobserved = 2;
  const auto rows = ablation_configs(base);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].second.weights.lambda_d, 0.0);
  EXPECT_EQ(rows[0].second.weights.lambda_kl, 0.0);
  EXPECT_EQ(rows[0].second.weights.lambda_s, 0.0);
  EXPECT_EQ(rows[0].second.k_unobserved, 0);
  EXPECT_EQ(rows[1].second.weights.lambda_d, base.weights.lambda_d);
  EXPECT_EQ(rows[1].second.k_unobserved, 0);
  EXPECT_EQ(to_json(rows[2].second).dump(), to_json(base).dump());
  for (const auto& [name, cfg] : rows) {
    EXPECT_EQ(cfg.iterations, base.iterations);
    EXPECT_EQ(cfg.seed, base.seed);
    EXPECT_EQ(cfg.rays.color, base.rays.color);
  }
}

TEST(Ablation, TinyRunIsDeterministicAndComplete) {
  const auto [train, test] = tiny_split();
  const auto a = run_ablation<float>(train, test, tiny_config(), 16);
  const auto b = run_ablation<float>(train, test, tiny_config(), 16);
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  for (const auto& r : a.rows) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.eval.views.size(), test.view_count());
    EXPECT_TRUE(std::isfinite(r.eval.mean_psnr));
    ASSERT_TRUE(r.eval.mean_depth_rmse);
  }
  const auto text = a.format();
  EXPECT_NE(text.find("color_ob + depth_ob + depth_nv"), std::string::npos);
  EXPECT_NE(text.find("PSNR"), std::string::npos);
}

TEST(Ablation, FailedRowIsReported) {
  auto [train, test] = tiny_split();
  auto cfg = tiny_config();
  cfg.optimizer.learning_rate = cfg.optimizer.final_learning_rate = 1e30;
  cfg.grad_clip = 0;
  cfg.iterations = 5;
  const auto t = run_ablation<float>(train, test, cfg, 8);
  for (const auto& r : t.rows) EXPECT_FALSE(r.error.empty());
  EXPECT_TRUE(t.to_json()[0].contains("error"));
  EXPECT_NE(t.format().find("failed"), std::string::npos);
}

TEST(DepthRmse, KnownOffset) {
  ImageBuffer a(4, 4, 1, 2.0f), b(4, 4, 1, 2.5f);
  EXPECT_NEAR(depth_rmse(a, b), 0.5, 1e-7);
}

TEST(RenderTrajectory, TrainingPoseReproducesTrainingPsnr) {
  const auto [train_views, test] = tiny_split();
  auto cfg = tiny_config();
  cfg.iterations = 300;
  const auto res = train<float>(train_views, cfg);
  double logged = 0;
  for (std::size_t i = res.log.size() - 30; i < res.log.size(); ++i) logged += res.log[i].psnr / 30;

  const auto dir = scratch("dsnerf_render_traj");
  ASSERT_EQ(render_trajectory(res.checkpoint, train_views.poses, train_views.intrinsics, dir, cfg.samples_per_ray),
            train_views.view_count());
  double rendered = 0;
  for (std::size_t v = 0; v < train_views.view_count(); ++v) {
    const auto img = read_png(dir / frame_name(v, "png"));
    rendered += psnr(img, train_views.images[v]) / static_cast<double>(train_views.view_count());
    const auto depth = read_pfm(dir / (frame_stem(v) + "_depth.pfm"));
    for (float d : depth.values) {
      EXPECT_TRUE(std::isfinite(d));
      EXPECT_GE(d, 0.0f);
      EXPECT_LE(d, res.checkpoint.meta.bounds.far);
    }
    EXPECT_TRUE(std::filesystem::exists(dir / (frame_stem(v) + "_depth.png")));
  }
  EXPECT_GT(rendered, logged - 1.0);
  std::filesystem::remove_all(dir);
}

TEST(RenderTrajectory, EmptyTrajectoryWritesNothing) {
  const auto [train_views, test] = tiny_split();
  auto cfg = tiny_config();
  cfg.iterations = 1;
  const auto res = train<float>(train_views, cfg);
  const auto dir = scratch("dsnerf_render_empty");
  EXPECT_EQ(render_trajectory(res.checkpoint, {}, train_views.intrinsics, dir, 8), 0u);
  EXPECT_TRUE(std::filesystem::is_empty(dir));
  std::filesystem::remove_all(dir);
}

TEST(Trajectory, FileRoundTrip) {
  const auto [train_views, test] = tiny_split();
  const auto path = std::filesystem::temp_directory_path() / "dsnerf_traj.json";
  save_trajectory(path, train_views.poses);
  const auto back = load_trajectory(path);
  ASSERT_EQ(back.size(), train_views.poses.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_LT((back[i].position - train_views.poses[i].position).norm(), 1e-12);
    EXPECT_LT(angular_distance(back[i].orientation, train_views.poses[i].orientation), 1e-9);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_trajectory(path), std::runtime_error);
}

TEST(Benchmark, SplitSizes) {
  const auto b = sphere_benchmark(0);
  EXPECT_EQ(b.train.view_count(), 20u);
  EXPECT_EQ(b.test.view_count(), 10u);
  EXPECT_EQ(b.config.iterations, 2000);
  EXPECT_FALSE(b.test.depth_maps.empty());
  EXPECT_GT(b.train.points.size(), 500u);
}
