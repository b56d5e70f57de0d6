#include "dsnerf/synthscene.hpp"
#include "dsnerf/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace dsnerf;

namespace {

SceneBundle sphere_views(int views, int res = 24, double arc_degrees = 120.0, int points = 800) {
  AnalyticScene scene;
  const auto k = Intrinsics::from_fov(res, res, 60.0);
  ArcTrajectory arc;
  arc.count = views;
  arc.arc_degrees = arc_degrees;
  return generate_dataset(scene, arc_trajectory(scene.center, arc), k, SynthOptions{points, 0.0, 11});
}

TrainConfig small_config(long iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.rays = {32, 16, 16};
  c.regen_interval = 50;
  c.samples_per_ray = 16;
  c.checkpoint_every = 0;
  c.field.trunk_layers = 2;
  c.field.trunk_width = 32;
  c.field.head_width = 16;
  c.field.pos_freqs = 4;
  c.field.dir_freqs = 2;
  c.optimizer.learning_rate = 5e-3;
  c.optimizer.final_learning_rate = 5e-4;
  c.seed = 3;
  return c;
}

std::string checkpoint_bytes(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ck);
  return out.str();
}

}  // namespace

TEST(Trainer, ZeroIterationsLeavesInitialField) {
  const auto scene = sphere_views(3);
  const auto cfg = small_config(0);
  Trainer<double> tr(scene, cfg);
  const auto before = tr.field().flat_parameters();
  const auto res = train<double>(scene, cfg);
  EXPECT_TRUE(res.log.empty());
  EXPECT_EQ(res.checkpoint.parameters, before);
}

TEST(Trainer, ColorLossMovingAverageDecreases) {
  const auto scene = sphere_views(5);
  const auto res = train<float>(scene, small_config(200));
  ASSERT_EQ(res.log.size(), 200u);
  std::vector<double> window_mean;
  for (int w = 0; w < 4; ++w) {
    double s = 0;
    for (int i = 50 * w; i < 50 * (w + 1); ++i) s += res.log[i].loss.color_ob;
    window_mean.push_back(s / 50);
  }
  for (int w = 1; w < 4; ++w) EXPECT_LT(window_mean[w], window_mean[w - 1]) << "window " << w;
}

TEST(Trainer, ZeroWeightsLogNoDepthLoss) {
  auto cfg = small_config(30);
  cfg.weights = {0, 0, 0, 0};
  cfg.k_unobserved = 0;
  std::ostringstream log;
  const auto res = train<float>(sphere_views(3), cfg, &log);
  for (const auto& r : res.log) {
    EXPECT_EQ(r.loss.depth_ob, 0.0);
    EXPECT_EQ(r.loss.depth_nv, 0.0);
    EXPECT_EQ(r.n_unobserved, 0);
  }
  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["depth_ob"].get<double>(), 0.0);
    EXPECT_EQ(j["depth_nv"].get<double>(), 0.0);
    EXPECT_EQ(j["iter"].get<long>(), count);
    ++count;
  }
  EXPECT_EQ(count, 30);
}

TEST(Unobserved, CountsPerConsecutivePair) {
  // neighbouring views overlap, so every in-between view sees part of the parents' points
  const auto scene = sphere_views(3, 24, 20.0, 8000);
  std::mt19937_64 rng(1);
  const auto b = scene.ray_bounds();
  EXPECT_EQ(regenerate_unobserved(scene, 2, rng, b).size(), 4u);
  EXPECT_TRUE(regenerate_unobserved(scene, 0, rng, b).empty());
  const auto x = regenerate_unobserved(scene, 2, rng, b);
  const auto y = regenerate_unobserved(scene, 2, rng, b);
  EXPECT_NE(x[0].pose.alpha, y[0].pose.alpha);
  for (const auto& v : x) {
    EXPECT_EQ(v.pose.parent_b, v.pose.parent_a + 1);
    EXPECT_FALSE(v.samples.empty());
  }
}

TEST(Unobserved, GenerationAdvancesOnlyOnInterval) {
  auto cfg = small_config(120);
  cfg.regen_interval = 40;
  const auto res = train<float>(sphere_views(3), cfg);
  for (const auto& r : res.log) {
    EXPECT_EQ(r.unobserved_generation, r.iter / 40 + 1);
    EXPECT_EQ(r.n_unobserved, 4);
  }
}

TEST(Adam, ZeroGradientKeepsParameters) {
  FieldConfig fc;
  fc.trunk_layers = 2;
  fc.trunk_width = 8;
  fc.head_width = 4;
  RadianceField<double> f(fc, 1);
  const auto before = f.flat_parameters();
  Adam<double> adam(f, AdamConfig{});
  for (int i = 0; i < 5; ++i) adam.step(f, f.make_tape(), 1e-2);
  EXPECT_EQ(f.flat_parameters(), before);
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  FieldConfig fc;
  fc.trunk_layers = 1;
  fc.trunk_width = 4;
  fc.head_width = 4;
  RadianceField<double> f(fc, 1);
  const auto before = f.flat_parameters();
  auto tape = f.make_tape();
  for (auto& g : tape.grads) g.setConstant(-3.0);
  Adam<double> adam(f, AdamConfig{});
  adam.step(f, tape, 0.01);
  const auto after = f.flat_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_NEAR(after[i] - before[i], 0.01, 1e-9);
}

TEST(LearningRate, CosineEndpoints) {
  AdamConfig c;
  c.learning_rate = 1e-3;
  c.final_learning_rate = 1e-5;
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 0, 101), 1e-3);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 100, 101), 1e-5);
  EXPECT_NEAR(cosine_learning_rate(c, 50, 101), 0.5 * (1e-3 + 1e-5), 1e-15);
}

TEST(Trainer, BitwiseDeterministic) {
  const auto scene = sphere_views(3);
  const auto cfg = small_config(40);
  const auto a = train<float>(scene, cfg);
  const auto b = train<float>(scene, cfg);
  EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(checkpoint_bytes(a.checkpoint), checkpoint_bytes(train<float>(scene, other).checkpoint));
}

TEST(Trainer, WorkerCountDoesNotChangeResult) {
  const auto scene = sphere_views(3);
  auto cfg = small_config(20);
  cfg.chunk_patches = 8;
  const auto one = train<float>(scene, cfg);
  cfg.workers = 3;
  const auto three = train<float>(scene, cfg);
  EXPECT_EQ(one.checkpoint.parameters, three.checkpoint.parameters);
}

TEST(Trainer, DivergenceNamesRaySet) {
  auto cfg = small_config(5);
  cfg.optimizer.learning_rate = 1e30;
  cfg.optimizer.final_learning_rate = 1e30;
  cfg.grad_clip = 0;
  try {
    train<float>(sphere_views(3), cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration"), std::string::npos);
  }
}

TEST(Trainer, RejectsBadInputs) {
  auto cfg = small_config(5);
  cfg.samples_per_ray = 1;
  EXPECT_THROW(Trainer<float>(sphere_views(3), cfg), std::invalid_argument);
  cfg = small_config(5);
  cfg.weights.lambda_d = -1;
  EXPECT_THROW(Trainer<float>(sphere_views(3), cfg), std::invalid_argument);
  EXPECT_THROW(Trainer<float>(select_views(sphere_views(3), {0}), small_config(5)), std::invalid_argument);
}

TEST(TrainConfig, JsonRoundTrip) {
  auto c = small_config(77);
  c.weights.sigma_kl = 0.05;
  c.bounds = DepthRange{0.25, 4.0};
  c.workers = 2;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  const auto partial = train_config_from_json(nlohmann::json{{"iterations", 9}}, c);
  EXPECT_EQ(partial.iterations, 9);
  EXPECT_EQ(partial.rays.color, 32);
}

TEST(Trainer, CheckpointCadence) {
  auto cfg = small_config(25);
  cfg.checkpoint_every = 10;
  std::vector<long> at;
  train<float>(sphere_views(3), cfg, nullptr, [&](const Checkpoint& ck) { at.push_back(ck.meta.iteration); });
  EXPECT_EQ(at, (std::vector<long>{10, 20, 25}));
}
