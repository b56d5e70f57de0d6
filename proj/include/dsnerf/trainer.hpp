#pragma once

// Optimization loop: ray batches, rendering, loss, reverse pass, Adam update, and the periodic
// replacement of interpolated views.

#include "dsnerf/checkpoint.hpp"
#include "dsnerf/field.hpp"
#include "dsnerf/geometry.hpp"
#include "dsnerf/losses.hpp"
#include "dsnerf/metrics.hpp"
#include "dsnerf/rays.hpp"
#include "dsnerf/renderer.hpp"
#include "dsnerf/scene.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsnerf {

struct AdamConfig {
  double learning_rate = 5e-4;
  double final_learning_rate = 5e-6;  // cosine decay target
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  long iterations = 25000;
  int k_unobserved = 2;
  BatchSizes rays;
  long regen_interval = 2000;
  LossWeights weights;
  AdamConfig optimizer;
  std::uint64_t seed = 0;
  int samples_per_ray = 128;
  long checkpoint_every = 5000;
  double grad_clip = 10.0;  // global L2 norm, <= 0 disables
  FieldConfig field;
  bool auto_normalize = true;  // fit field.center / field.scale to the scene
  std::optional<DepthRange> bounds;
  int workers = 1;
  int chunk_patches = 64;

  void validate() const {
    if (iterations < 0 || k_unobserved < 0 || rays.color < 0 || rays.depth_observed < 0 || rays.depth_unobserved < 0 ||
        samples_per_ray < 2 || regen_interval < 1 || workers < 1 || chunk_patches < 1) {
      throw std::invalid_argument("invalid training configuration");
    }
    if (weights.lambda_d < 0 || weights.lambda_kl < 0 || weights.lambda_s < 0) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"iterations", c.iterations},
                   {"k_unobserved", c.k_unobserved},
                   {"rays", {{"color", c.rays.color}, {"depth_observed", c.rays.depth_observed}, {"depth_unobserved", c.rays.depth_unobserved}}},
                   {"regen_interval", c.regen_interval},
                   {"weights", {{"lambda_d", c.weights.lambda_d}, {"lambda_kl", c.weights.lambda_kl}, {"lambda_s", c.weights.lambda_s}, {"sigma_kl", c.weights.sigma_kl}}},
                   {"optimizer", {{"learning_rate", c.optimizer.learning_rate}, {"final_learning_rate", c.optimizer.final_learning_rate}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"epsilon", c.optimizer.epsilon}}},
                   {"seed", c.seed},
                   {"samples_per_ray", c.samples_per_ray},
                   {"checkpoint_every", c.checkpoint_every},
                   {"grad_clip", c.grad_clip},
                   {"field", to_json(c.field)},
                   {"auto_normalize", c.auto_normalize},
                   {"workers", c.workers},
                   {"chunk_patches", c.chunk_patches}};
  if (c.bounds) j["bounds"] = {{"near", c.bounds->near}, {"far", c.bounds->far}};
  return j;
}

// Missing keys keep the values already in `c`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.iterations = j.value("iterations", c.iterations);
  c.k_unobserved = j.value("k_unobserved", c.k_unobserved);
  if (j.contains("rays")) {
    const auto& r = j["rays"];
    c.rays.color = r.value("color", c.rays.color);
    c.rays.depth_observed = r.value("depth_observed", c.rays.depth_observed);
    c.rays.depth_unobserved = r.value("depth_unobserved", c.rays.depth_unobserved);
  }
  c.regen_interval = j.value("regen_interval", c.regen_interval);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.lambda_d = w.value("lambda_d", c.weights.lambda_d);
    c.weights.lambda_kl = w.value("lambda_kl", c.weights.lambda_kl);
    c.weights.lambda_s = w.value("lambda_s", c.weights.lambda_s);
    c.weights.sigma_kl = w.value("sigma_kl", c.weights.sigma_kl);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.final_learning_rate = o.value("final_learning_rate", c.optimizer.final_learning_rate);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
  }
  c.seed = j.value("seed", c.seed);
  c.samples_per_ray = j.value("samples_per_ray", c.samples_per_ray);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("field")) c.field = field_config_from_json(j["field"], c.field);
  c.auto_normalize = j.value("auto_normalize", c.auto_normalize);
  if (j.contains("bounds")) c.bounds = DepthRange{j["bounds"].at("near"), j["bounds"].at("far")};
  c.workers = j.value("workers", c.workers);
  c.chunk_patches = j.value("chunk_patches", c.chunk_patches);
  return c;
}

template <class S>
class Adam {
 public:
  Adam(const RadianceField<S>& field, const AdamConfig& cfg) : cfg_(cfg) {
    for (const auto& p : field.parameters()) {
      m_.push_back(MatrixX<S>::Zero(p.rows(), p.cols()));
      v_.push_back(MatrixX<S>::Zero(p.rows(), p.cols()));
    }
  }

  void step(RadianceField<S>& field, const GradientTape<S>& tape, double lr) {
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S c2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const S eps = static_cast<S>(cfg_.epsilon);
    const S step = static_cast<S>(lr);
    auto& params = field.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& g = tape.grads[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseProduct(g);
      params[i].array() -= step * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<MatrixX<S>> m_;
  std::vector<MatrixX<S>> v_;
  long t_ = 0;
};

inline double cosine_learning_rate(const AdamConfig& cfg, long iteration, long total) {
  if (total <= 1) return cfg.learning_rate;
  const double progress = std::clamp(static_cast<double>(iteration) / static_cast<double>(total - 1), 0.0, 1.0);
  return cfg.final_learning_rate + 0.5 * (cfg.learning_rate - cfg.final_learning_rate) * (1.0 + std::cos(kPi * progress));
}

// Interpolated views for every consecutive observed pair plus their sparse depth samples.
inline std::vector<UnobservedView> regenerate_unobserved(const SceneBundle& scene, int k, std::mt19937_64& rng,
                                                         const DepthRange& bounds) {
  std::vector<UnobservedView> out;
  for (auto& ip : generate_unobserved_poses(scene.poses, k, rng)) {
    auto samples = sparse_depth_for_view(scene.points, InterpolatedView{ip.parent_a, ip.parent_b}, ip.pose,
                                         scene.intrinsics, bounds);
    out.push_back({ip, std::move(samples)});
  }
  return out;
}

// Positions enter the encoding as (x - center) / scale with everything a ray can reach in [-1, 1].
inline void fit_field_normalization(FieldConfig& field, const SceneBundle& scene, const DepthRange& bounds) {
  Vec3 center = Vec3::Zero();
  if (!scene.points.empty()) {
    for (const auto& p : scene.points) center += p.position;
    center /= static_cast<double>(scene.points.size());
  } else if (!scene.poses.empty()) {
    for (const auto& p : scene.poses) center += p.position;
    center /= static_cast<double>(scene.poses.size());
  }
  double reach = 0.0;
  for (const auto& p : scene.poses) reach = std::max(reach, (p.position - center).norm() + bounds.far);
  field.center = center;
  field.scale = reach > 0.0 ? reach : 1.0;
}

struct TrainLogRecord {
  long iter = 0;
  LossReport loss;
  double lr = 0;
  int n_unobserved = 0;
  long unobserved_generation = 0;
  double psnr = 0;  // of this iteration's color rays

  nlohmann::json to_json() const {
    return {{"iter", iter},
            {"color_ob", loss.color_ob},
            {"depth_ob", loss.depth_ob},
            {"depth_nv", loss.depth_nv},
            {"total", loss.total},
            {"lr", lr},
            {"n_unobserved", n_unobserved},
            {"unobserved_generation", unobserved_generation},
            {"psnr", psnr},
            {"l_d_ob", loss.ob.l_d},
            {"l_kl_ob", loss.ob.l_kl},
            {"l_s_ob", loss.ob.l_s},
            {"l_d_nv", loss.nv.l_d},
            {"l_kl_nv", loss.nv.l_kl},
            {"l_s_nv", loss.nv.l_s}};
  }
};

enum class RaySet { ColorObserved = 0, DepthObserved = 1, DepthUnobserved = 2 };

template <class S>
struct PatchGradient {
  GradientTape<S> tape;
  LossReport report;
};

// Loss and parameter gradient for one group of patches from a single ray set. `t` holds the
// sample distances per rendered ray, patch-major: center[, right, down].
template <class S>
PatchGradient<S> patch_loss_gradient(const RadianceField<S>& field, RaySet set, std::span<const RayPatch> patches,
                                     const std::vector<std::vector<S>>& t, bool neighbors, const LossWeights& weights) {
  const int per_patch = neighbors ? 3 : 1;
  const std::size_t patch_count = patches.size();
  if (t.size() != patch_count * per_patch) throw std::invalid_argument("sample list count does not match patches");
  const Eigen::Index rays = static_cast<Eigen::Index>(patch_count) * per_patch;
  const Eigen::Index n = patch_count ? static_cast<Eigen::Index>(t.front().size()) : 0;
  for (const auto& ts : t) {
    if (static_cast<Eigen::Index>(ts.size()) != n) throw std::invalid_argument("rays must share a sample count");
  }
  auto member = [&](std::size_t p, int m) -> const Ray& {
    return m == 0 ? patches[p].center : (m == 1 ? patches[p].right : patches[p].down);
  };

  Eigen::Matrix3Xd x(3, rays * n);
  Eigen::Matrix3Xd d(3, rays * n);
  for (std::size_t p = 0; p < patch_count; ++p) {
    for (int m = 0; m < per_patch; ++m) {
      const Eigen::Index r = static_cast<Eigen::Index>(p) * per_patch + m;
      const auto& ts = t[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < n; ++i) {
        x.col(r * n + i) = member(p, m).at(static_cast<double>(ts[i]));
        d.col(r * n + i) = member(p, m).direction;
      }
    }
  }

  FieldCache<S> cache;
  field.forward(x, d, cache);

  std::vector<PatchRender<S>> renders(patch_count);
  for (std::size_t p = 0; p < patch_count; ++p) {
    for (int m = 0; m < per_patch; ++m) {
      const Eigen::Index r = static_cast<Eigen::Index>(p) * per_patch + m;
      auto rr = composite<S>(t[static_cast<std::size_t>(r)], static_cast<S>(member(p, m).t_near),
                             static_cast<S>(member(p, m).t_far), cache.sigma.segment(r * n, n),
                             cache.color.middleCols(r * n, n));
      if (m == 0) renders[p].center = std::move(rr);
      if (m == 1) renders[p].right = std::move(rr);
      if (m == 2) renders[p].down = std::move(rr);
    }
  }

  const std::span<const PatchRender<S>> rs(renders);
  LossResult<S> loss;
  if (set == RaySet::ColorObserved) loss = total_loss<S>(patches, rs, {}, {}, {}, {}, weights);
  if (set == RaySet::DepthObserved) loss = total_loss<S>({}, {}, patches, rs, {}, {}, weights);
  if (set == RaySet::DepthUnobserved) loss = total_loss<S>({}, {}, {}, {}, patches, rs, weights);
  const auto& upstream =
      set == RaySet::ColorObserved ? loss.color_ob : (set == RaySet::DepthObserved ? loss.depth_ob : loss.depth_nv);

  RowX<S> d_sigma(rays * n);
  Matrix3X<S> d_color(3, rays * n);
  for (std::size_t p = 0; p < patch_count; ++p) {
    const RayRender<S>* rr[3] = {&renders[p].center, renders[p].right ? &*renders[p].right : nullptr,
                                 renders[p].down ? &*renders[p].down : nullptr};
    const RayUpstream<S>* up[3] = {&upstream[p].center, &upstream[p].right, &upstream[p].down};
    for (int m = 0; m < per_patch; ++m) {
      const Eigen::Index r = static_cast<Eigen::Index>(p) * per_patch + m;
      const auto g = composite_backward(*rr[m], up[m]->d_color, up[m]->d_depth, up[m]->d_weight);
      d_sigma.segment(r * n, n) = g.d_sigma;
      d_color.middleCols(r * n, n) = g.d_color;
    }
  }

  PatchGradient<S> out{field.make_tape(), loss.report};
  field.backward(cache, d_sigma, d_color, out.tape);
  return out;
}

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class S>
class Trainer {
 public:
  Trainer(SceneBundle scene, TrainConfig config)
      : scene_(std::move(scene)), config_(std::move(config)) {
    for (std::uint64_t set = 0; set < streams_.size(); ++set) {
      std::seed_seq seq{config_.seed, set};
      streams_[set].seed(seq);
    }
    config_.validate();
    scene_.validate();
    if (scene_.view_count() < 2) throw std::invalid_argument("training needs at least two observed views");
    if (scene_.points.empty()) {
      if (!config_.bounds && !scene_.bounds) throw std::invalid_argument("scene without points needs explicit bounds");
      std::cerr << "warning: empty point cloud, training with color supervision only\n";
    }
    bounds_ = config_.bounds ? *config_.bounds : scene_.ray_bounds();
    if (config_.auto_normalize) fit_field_normalization(config_.field, scene_, bounds_);
    field_ = RadianceField<S>(config_.field, config_.seed ^ 0x9e3779b97f4a7c15ULL);
    adam_.emplace(field_, config_.optimizer);
    depth_.observed = observed_depth_samples(scene_, bounds_);
  }

  const RadianceField<S>& field() const { return field_; }
  const TrainConfig& config() const { return config_; }
  const DepthRange& bounds() const { return bounds_; }
  const SceneBundle& scene() const { return scene_; }
  const DepthSupervision& depth_supervision() const { return depth_; }
  long iteration() const { return iteration_; }

  bool depth_active() const {
    const auto& w = config_.weights;
    return w.lambda_d > 0 || w.lambda_kl > 0 || w.lambda_s > 0;
  }

  CheckpointMeta meta() const { return {bounds_, scene_.intrinsics, scene_.poses, iteration_}; }

  TrainLogRecord step() {
    const long it = iteration_;
    if (it % config_.regen_interval == 0 && config_.k_unobserved > 0 && depth_active()) {
      depth_.unobserved = regenerate_unobserved(scene_, config_.k_unobserved, streams_[2], bounds_);
      ++generation_;
    }

    BatchSizes sizes = config_.rays;
    if (!depth_active()) sizes.depth_observed = sizes.depth_unobserved = 0;
    RayBatch batch = sample_ray_batch(scene_, depth_, sizes, bounds_, RaySetStreams{&streams_[0], &streams_[1], &streams_[2]});

    const bool neighbors = config_.weights.lambda_s > 0;
    std::vector<Chunk> chunks;
    add_chunks(chunks, 0, batch.color_ob, neighbors);
    add_chunks(chunks, 1, batch.depth_ob, neighbors);
    add_chunks(chunks, 2, batch.depth_nv, neighbors);

    std::vector<ChunkResult> results(chunks.size());
    run_chunks(batch, chunks, results);

    GradientTape<S> tape = field_.make_tape();
    LossReport report;
    for (std::size_t c = 0; c < results.size(); ++c) {
      tape.add(results[c].tape);
      report += results[c].report;
      if (!std::isfinite(results[c].report.total)) diverged(it, chunks[c], results[c].report);
    }
    const double norm = std::sqrt(static_cast<double>(tape.squared_norm()));
    if (!std::isfinite(norm)) throw TrainingDiverged("non-finite gradient at iteration " + std::to_string(it));
    if (config_.grad_clip > 0 && norm > config_.grad_clip) tape.scale(static_cast<S>(config_.grad_clip / norm));

    const double lr = cosine_learning_rate(config_.optimizer, it, config_.iterations);
    adam_->step(field_, tape, lr);
    ++iteration_;
    double psnr = 0.0;
    if (!batch.color_ob.empty()) {
      const double mse = report.color_ob / (3.0 * static_cast<double>(batch.color_ob.size()));
      psnr = mse > 0.0 ? -10.0 * std::log10(mse) : kPsnrLogCap;
    }
    return {it, report, lr, static_cast<int>(depth_.unobserved.size()), generation_, psnr};
  }

  // Runs the remaining iterations. `on_record` sees every log record, `on_checkpoint` fires at the
  // checkpoint cadence and after the final iteration.
  void run(const std::function<void(const TrainLogRecord&)>& on_record = {},
           const std::function<void(const Checkpoint&)>& on_checkpoint = {}) {
    while (iteration_ < config_.iterations) {
      const auto rec = step();
      if (on_record) on_record(rec);
      if (on_checkpoint && config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0 &&
          iteration_ < config_.iterations) {
        on_checkpoint(make_checkpoint(field_, meta()));
      }
    }
    if (on_checkpoint) on_checkpoint(make_checkpoint(field_, meta()));
  }

 private:
  struct Chunk {
    int set = 0;  // 0 color_ob, 1 depth_ob, 2 depth_nv
    std::size_t begin = 0;
    std::size_t end = 0;
    bool neighbors = false;
    std::vector<std::vector<S>> t;  // per rendered ray: center[, right, down] per patch
  };

  struct ChunkResult {
    GradientTape<S> tape;
    LossReport report;
  };

  void add_chunks(std::vector<Chunk>& chunks, int set, const std::vector<RayPatch>& patches, bool neighbors) {
    const std::size_t step = static_cast<std::size_t>(config_.chunk_patches);
    for (std::size_t b = 0; b < patches.size(); b += step) {
      Chunk c{set, b, std::min(patches.size(), b + step), neighbors, {}};
      for (std::size_t i = c.begin; i < c.end; ++i) {
        for (const Ray* r : rays_of(patches[i], neighbors)) {
          const auto t = stratified_sample(*r, config_.samples_per_ray, &streams_[set]);
          c.t.emplace_back(t.begin(), t.end());
        }
      }
      chunks.push_back(std::move(c));
    }
  }

  static std::vector<const Ray*> rays_of(const RayPatch& p, bool neighbors) {
    if (neighbors) return {&p.center, &p.right, &p.down};
    return {&p.center};
  }

  static const std::vector<RayPatch>& set_of(const RayBatch& b, int set) {
    return set == 0 ? b.color_ob : (set == 1 ? b.depth_ob : b.depth_nv);
  }

  void run_chunks(const RayBatch& batch, const std::vector<Chunk>& chunks, std::vector<ChunkResult>& results) const {
    const int workers = std::min<int>(config_.workers, static_cast<int>(chunks.size()));
    if (workers <= 1) {
      for (std::size_t c = 0; c < chunks.size(); ++c) results[c] = process_chunk(batch, chunks[c]);
      return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = static_cast<std::size_t>(w); c < chunks.size(); c += static_cast<std::size_t>(workers)) {
          results[c] = process_chunk(batch, chunks[c]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  ChunkResult process_chunk(const RayBatch& batch, const Chunk& chunk) const {
    const auto& patches = set_of(batch, chunk.set);
    const std::span<const RayPatch> span(patches.data() + chunk.begin, chunk.end - chunk.begin);
    auto r = patch_loss_gradient(field_, static_cast<RaySet>(chunk.set), span, chunk.t, chunk.neighbors, config_.weights);
    return {std::move(r.tape), r.report};
  }

  [[noreturn]] void diverged(long it, const Chunk& chunk, const LossReport& r) const {
    static const char* names[] = {"color_ob", "depth_ob", "depth_nv"};
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << it << " in ray set " << names[chunk.set] << " (patches " << chunk.begin
        << ".." << chunk.end << "): color=" << r.color_ob << " l_d_ob=" << r.ob.l_d << " l_kl_ob=" << r.ob.l_kl
        << " l_s_ob=" << r.ob.l_s << " l_d_nv=" << r.nv.l_d << " l_kl_nv=" << r.nv.l_kl << " l_s_nv=" << r.nv.l_s;
    throw TrainingDiverged(msg.str());
  }

  SceneBundle scene_;
  TrainConfig config_;
  std::array<std::mt19937_64, 3> streams_;  // color_ob, depth_ob, depth_nv
  DepthRange bounds_;
  RadianceField<S> field_;
  std::optional<Adam<S>> adam_;
  DepthSupervision depth_;
  long iteration_ = 0;
  long generation_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRecord> log;
};

// Trains to completion. When `log_out` is set, every record is appended as one JSON line.
template <class S>
TrainResult train(const SceneBundle& scene, const TrainConfig& config, std::ostream* log_out = nullptr,
                  const std::function<void(const Checkpoint&)>& on_checkpoint = {}) {
  Trainer<S> trainer(scene, config);
  TrainResult result;
  trainer.run(
      [&](const TrainLogRecord& rec) {
        if (log_out) *log_out << rec.to_json().dump() << '\n';
        result.log.push_back(rec);
      },
      [&](const Checkpoint& ck) {
        if (on_checkpoint) on_checkpoint(ck);
      });
  result.checkpoint = make_checkpoint(trainer.field(), trainer.meta());
  return result;
}

}  // namespace dsnerf
