#pragma once

// Held-out evaluation, the three-row loss ablation, trajectory rendering, and the committed
// sphere benchmark used by the acceptance suite.

#include "dsnerf/checkpoint.hpp"
#include "dsnerf/metrics.hpp"
#include "dsnerf/renderer.hpp"
#include "dsnerf/synthscene.hpp"
#include "dsnerf/trainer.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace dsnerf {

struct ViewMetrics {
  double psnr = 0;
  double ssim = 0;
  std::optional<double> depth_rmse;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::optional<double> mean_depth_rmse;

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < views.size(); ++i) {
      nlohmann::json v{{"view", i}, {"psnr", psnr_for_log(views[i].psnr)}, {"ssim", views[i].ssim}};
      if (views[i].depth_rmse) v["depth_rmse"] = *views[i].depth_rmse;
      per.push_back(v);
    }
    nlohmann::json j{{"views", per}, {"mean", {{"psnr", psnr_for_log(mean_psnr)}, {"ssim", mean_ssim}}}};
    if (mean_depth_rmse) j["mean"]["depth_rmse"] = *mean_depth_rmse;
    return j;
  }
};

inline double depth_rmse(const ImageBuffer& rendered, const ImageBuffer& truth) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    if (!std::isfinite(truth.values[i]) || truth.values[i] <= 0.0f) continue;
    const double d = static_cast<double>(rendered.values[i]) - truth.values[i];
    sum += d * d;
    ++n;
  }
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

// Renders every view of `test` and scores it against the stored images (and depth maps if present).
template <class Field>
EvalReport evaluate_views(const Field& field, const SceneBundle& test, const DepthRange& bounds, int samples) {
  EvalReport rep;
  double depth_sum = 0.0;
  for (std::size_t v = 0; v < test.view_count(); ++v) {
    auto out = render_view(field, test.poses[v], test.intrinsics, bounds, samples);
    out.rgb.clamp01();
    ViewMetrics m{psnr(out.rgb, test.images[v]), ssim(out.rgb, test.images[v]), std::nullopt};
    if (v < test.depth_maps.size()) {
      m.depth_rmse = depth_rmse(out.depth, test.depth_maps[v]);
      depth_sum += *m.depth_rmse;
    }
    rep.mean_psnr += m.psnr;
    rep.mean_ssim += m.ssim;
    rep.views.push_back(m);
  }
  if (!rep.views.empty()) {
    rep.mean_psnr /= static_cast<double>(rep.views.size());
    rep.mean_ssim /= static_cast<double>(rep.views.size());
    if (!test.depth_maps.empty()) rep.mean_depth_rmse = depth_sum / static_cast<double>(test.depth_maps.size());
  }
  return rep;
}

struct AblationRow {
  std::string name;
  EvalReport eval;
  std::string error;  // non-empty when training this row failed
};

struct AblationTable {
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"configuration", r.name}};
      if (!r.error.empty()) {
        row["error"] = r.error;
      } else {
        row["psnr"] = psnr_for_log(r.eval.mean_psnr);
        row["ssim"] = r.eval.mean_ssim;
        if (r.eval.mean_depth_rmse) row["depth_rmse"] = *r.eval.mean_depth_rmse;
      }
      j.push_back(row);
    }
    return j;
  }

  std::string format() const {
    std::ostringstream out;
    out << std::left << std::setw(28) << "configuration" << std::right << std::setw(10) << "PSNR" << std::setw(10)
        << "SSIM" << std::setw(12) << "depth RMSE" << '\n';
    out << std::fixed;
    for (const auto& r : rows) {
      out << std::left << std::setw(28) << r.name << std::right;
      if (!r.error.empty()) {
        out << "  failed: " << r.error << '\n';
        continue;
      }
      out << std::setw(10) << std::setprecision(2) << psnr_for_log(r.eval.mean_psnr) << std::setw(10)
          << std::setprecision(4) << r.eval.mean_ssim << std::setw(12) << std::setprecision(4)
          << r.eval.mean_depth_rmse.value_or(NAN) << '\n';
    }
    return out.str();
  }
};

// Row 1: color loss only. Row 2: plus depth losses on observed views. Row 3: plus interpolated views.
inline std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
  TrainConfig color_only = base;
  color_only.weights.lambda_d = color_only.weights.lambda_kl = color_only.weights.lambda_s = 0.0;
  color_only.k_unobserved = 0;
  TrainConfig observed = base;
  observed.k_unobserved = 0;
  return {{"color_ob", color_only}, {"color_ob + depth_ob", observed}, {"color_ob + depth_ob + depth_nv", base}};
}

template <class S = float>
AblationTable run_ablation(const SceneBundle& train_views, const SceneBundle& test_views, const TrainConfig& base,
                           int eval_samples, const std::function<void(const std::string&, const TrainResult&)>& on_row = {}) {
  AblationTable table;
  for (const auto& [name, cfg] : ablation_configs(base)) {
    AblationRow row{name, {}, {}};
    try {
      auto result = train<S>(train_views, cfg);
      const auto field = result.checkpoint.template make_field<S>();
      row.eval = evaluate_views(field, test_views, result.checkpoint.meta.bounds, eval_samples);
      if (on_row) on_row(name, result);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Writes NNNN.png, NNNN_depth.pfm and NNNN_depth.png per pose; returns the frame count.
inline std::size_t render_trajectory(const Checkpoint& ck, const std::vector<CameraPose>& poses, const Intrinsics& intr,
                                     const std::filesystem::path& out_dir, int samples) {
  std::filesystem::create_directories(out_dir);
  const auto field = ck.make_field<float>();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto out = render_view(field, poses[i], intr, ck.meta.bounds, samples);
    out.rgb.clamp01();
    write_png(out_dir / frame_name(i, "png"), out.rgb);
    write_pfm(out_dir / (frame_stem(i) + "_depth.pfm"), out.depth);
    write_png(out_dir / (frame_stem(i) + "_depth.png"),
              colorize_depth(out.depth, ck.meta.bounds.near, ck.meta.bounds.far));
  }
  return poses.size();
}

// Trajectory file: {"poses": [{"position": [x,y,z], "orientation": [w,x,y,z]}, ...]} or a bare list.
inline std::vector<CameraPose> load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  const auto& list = j.is_array() ? j : j.at("poses");
  std::vector<CameraPose> poses;
  for (const auto& p : list) poses.push_back(pose_from_json(p));
  return poses;
}

inline void save_trajectory(const std::filesystem::path& path, const std::vector<CameraPose>& poses) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : poses) list.push_back(to_json(p));
  std::ofstream(path) << nlohmann::json{{"poses", list}}.dump(2) << '\n';
}

// The committed benchmark: inside of a textured unit sphere, 30 poses on an arc close to the wall
// (each wall patch is seen by only a couple of training views), every third pose held out
// (20 train / 10 test), 5,000 cloud points.
struct Benchmark {
  AnalyticScene scene;
  SceneBundle train;
  SceneBundle test;
  TrainConfig config;
  int eval_samples = 64;
};

struct BenchmarkGeometry {
  ArcTrajectory trajectory;
  TextureParams texture;
  int resolution = 48;
  double fov_deg = 60.0;
  int holdout_every = 3;  // pose i is held out when i % holdout_every == 1
};

inline Benchmark sphere_benchmark(std::uint64_t seed = 0, const BenchmarkGeometry& g = {}) {
  Benchmark b;
  b.scene.type = SurfaceType::SphereInterior;
  b.scene.radius = 1.0;
  b.scene.texture = g.texture;
  const auto poses = arc_trajectory(b.scene.center, g.trajectory);
  const auto intr = Intrinsics::from_fov(g.resolution, g.resolution, g.fov_deg);
  const auto all = generate_dataset(b.scene, poses, intr, SynthOptions{5000, 0.0, 1000 + seed});
  std::vector<int> train_idx;
  std::vector<int> test_idx;
  for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
    (i % g.holdout_every == 1 ? test_idx : train_idx).push_back(i);
  }
  b.train = select_views(all, train_idx);
  b.test = select_views(all, test_idx);

  auto& c = b.config;
  c.iterations = 2000;
  c.k_unobserved = 2;
  c.rays = {128, 64, 64};
  c.regen_interval = 200;
  c.samples_per_ray = 32;
  c.checkpoint_every = 0;
  c.optimizer.learning_rate = 5e-3;
  c.optimizer.final_learning_rate = 5e-4;
  c.field.trunk_layers = 3;
  c.field.trunk_width = 64;
  c.field.head_width = 32;
  c.field.pos_freqs = 8;
  c.field.dir_freqs = 2;
  c.seed = seed;
  b.eval_samples = 64;
  return b;
}

}  // namespace dsnerf
