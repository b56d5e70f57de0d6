#pragma once

// Camera rays and the per-iteration ray sets: color rays on observed views, depth rays on
// observed views, depth rays on interpolated views. Every ray is wrapped in a patch with its
// right and down neighbours for the depth smoothness term.

#include "dsnerf/geometry.hpp"
#include "dsnerf/pointcloud.hpp"
#include "dsnerf/scene.hpp"

#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace dsnerf {

enum class RayRole { ColorObserved, DepthObserved, DepthUnobserved, Neighbor };

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;
  RayRole role = RayRole::ColorObserved;
  std::optional<Vec3> ref_color;
  std::optional<double> ref_depth;
  Vec2 pixel = Vec2::Zero();
  int view_tag = 0;  // observed view index, or -1 - i for the i-th interpolated view

  Vec3 at(double t) const { return origin + t * direction; }

  bool valid() const {
    if (std::abs(direction.norm() - 1.0) > 1e-9 || !(t_near > 0.0 && t_near < t_far)) return false;
    switch (role) {
      case RayRole::ColorObserved:
        return ref_color.has_value();
      case RayRole::DepthObserved:
      case RayRole::DepthUnobserved:
        return ref_depth && *ref_depth > t_near && *ref_depth < t_far;
      case RayRole::Neighbor:
        return true;
    }
    return false;
  }
};

struct RayPatch {
  Ray center;
  Ray right;
  Ray down;
};

inline Ray pixel_to_ray(const CameraPose& pose, const Intrinsics& intr, const Vec2& pixel, const DepthRange& bounds) {
  if (!(pixel.x() >= 0.0 && pixel.x() < intr.width && pixel.y() >= 0.0 && pixel.y() < intr.height)) {
    throw std::invalid_argument("pixel outside the image");
  }
  const Vec3 cam((pixel.x() + 0.5 - intr.cx) / intr.fx, (pixel.y() + 0.5 - intr.cy) / intr.fy, 1.0);
  Ray r;
  r.origin = pose.position;
  r.direction = pose.orientation.rotate(cam).normalized();
  r.t_near = bounds.near;
  r.t_far = bounds.far;
  r.pixel = pixel;
  return r;
}

// Neighbour one pixel right (down), folded backwards on the last column (row).
inline Vec2 right_neighbor_pixel(const Vec2& p, const Intrinsics& intr) {
  return p.x() + 1.0 <= intr.width - 1 ? Vec2(p.x() + 1.0, p.y()) : Vec2(p.x() - 1.0, p.y());
}
inline Vec2 down_neighbor_pixel(const Vec2& p, const Intrinsics& intr) {
  return p.y() + 1.0 <= intr.height - 1 ? Vec2(p.x(), p.y() + 1.0) : Vec2(p.x(), p.y() - 1.0);
}

struct UnobservedView {
  InterpolatedPose pose;
  std::vector<SparseDepthSample> samples;
};

// Precomputed depth supervision for one training phase.
struct DepthSupervision {
  std::vector<std::vector<SparseDepthSample>> observed;  // per observed view
  std::vector<UnobservedView> unobserved;
};

inline std::vector<std::vector<SparseDepthSample>> observed_depth_samples(const SceneBundle& scene,
                                                                          const DepthRange& bounds) {
  std::vector<std::vector<SparseDepthSample>> out(scene.view_count());
  for (std::size_t v = 0; v < scene.view_count(); ++v) {
    out[v] = sparse_depth_for_view(scene.points, ObservedView{static_cast<int>(v)}, scene.poses[v], scene.intrinsics,
                                   bounds);
  }
  return out;
}

struct BatchSizes {
  int color = 8192;
  int depth_observed = 4096;
  int depth_unobserved = 4096;
};

struct RayBatch {
  std::vector<RayPatch> color_ob;
  std::vector<RayPatch> depth_ob;
  std::vector<RayPatch> depth_nv;
};

namespace detail {

inline RayPatch make_patch(const CameraPose& pose, const Intrinsics& intr, const Vec2& pixel, const DepthRange& bounds,
                           int view_tag, const ImageBuffer* image) {
  RayPatch patch;
  patch.center = pixel_to_ray(pose, intr, pixel, bounds);
  patch.right = pixel_to_ray(pose, intr, right_neighbor_pixel(pixel, intr), bounds);
  patch.down = pixel_to_ray(pose, intr, down_neighbor_pixel(pixel, intr), bounds);
  for (Ray* r : {&patch.center, &patch.right, &patch.down}) {
    r->view_tag = view_tag;
    r->role = RayRole::Neighbor;
    if (image) {
      const int x = static_cast<int>(r->pixel.x());
      const int y = static_cast<int>(r->pixel.y());
      r->ref_color = Vec3(image->at(x, y, 0), image->at(x, y, 1), image->at(x, y, 2));
    }
  }
  return patch;
}

}  // namespace detail

// Color centres are uniform over (view, pixel); depth centres are uniform over the flattened
// sample lists, with replacement.
// One generator per ray set, so enabling or resizing one set leaves the draws of the others unchanged.
struct RaySetStreams {
  std::mt19937_64* color;
  std::mt19937_64* depth_observed;
  std::mt19937_64* depth_unobserved;
};

inline RayBatch sample_ray_batch(const SceneBundle& scene, const DepthSupervision& depth, const BatchSizes& sizes,
                                 const DepthRange& bounds, const RaySetStreams& streams) {
  RayBatch batch;
  const auto& intr = scene.intrinsics;
  if (sizes.color > 0 && scene.images.empty()) throw std::invalid_argument("no observed images for color rays");

  std::uniform_int_distribution<int> pick_view(0, static_cast<int>(scene.view_count()) - 1);
  std::uniform_int_distribution<int> pick_x(0, intr.width - 1);
  std::uniform_int_distribution<int> pick_y(0, intr.height - 1);
  batch.color_ob.reserve(std::max(sizes.color, 0));
  for (int i = 0; i < sizes.color; ++i) {
    auto& rng = *streams.color;
    const int v = pick_view(rng);
    const int x = pick_x(rng);
    const int y = pick_y(rng);
    auto patch = detail::make_patch(scene.poses[v], intr, Vec2(x, y), bounds, v, &scene.images[v]);
    patch.center.role = RayRole::ColorObserved;
    batch.color_ob.push_back(std::move(patch));
  }

  std::vector<const SparseDepthSample*> ob_pool;
  for (const auto& view : depth.observed) {
    for (const auto& s : view) ob_pool.push_back(&s);
  }
  if (!ob_pool.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, ob_pool.size() - 1);
    for (int i = 0; i < sizes.depth_observed; ++i) {
      const auto& s = *ob_pool[pick(*streams.depth_observed)];
      auto patch = detail::make_patch(scene.poses[s.view_index], intr, s.pixel, bounds, s.view_index, nullptr);
      patch.center.role = RayRole::DepthObserved;
      patch.center.ref_depth = s.depth;
      batch.depth_ob.push_back(std::move(patch));
    }
  }

  std::vector<std::pair<int, const SparseDepthSample*>> nv_pool;
  for (std::size_t u = 0; u < depth.unobserved.size(); ++u) {
    for (const auto& s : depth.unobserved[u].samples) nv_pool.emplace_back(static_cast<int>(u), &s);
  }
  if (!nv_pool.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, nv_pool.size() - 1);
    for (int i = 0; i < sizes.depth_unobserved; ++i) {
      const auto [u, s] = nv_pool[pick(*streams.depth_unobserved)];
      auto patch = detail::make_patch(depth.unobserved[u].pose.pose, intr, s->pixel, bounds, -1 - u, nullptr);
      patch.center.role = RayRole::DepthUnobserved;
      patch.center.ref_depth = s->depth;
      batch.depth_nv.push_back(std::move(patch));
    }
  }
  return batch;
}

inline RayBatch sample_ray_batch(const SceneBundle& scene, const DepthSupervision& depth, const BatchSizes& sizes,
                                 const DepthRange& bounds, std::mt19937_64& rng) {
  return sample_ray_batch(scene, depth, sizes, bounds, RaySetStreams{&rng, &rng, &rng});
}

inline RayBatch sample_ray_batch(const SceneBundle& scene, const DepthSupervision& depth, const BatchSizes& sizes,
                                 const DepthRange& bounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_ray_batch(scene, depth, sizes, bounds, rng);
}

}  // namespace dsnerf
