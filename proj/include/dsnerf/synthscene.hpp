#pragma once

// Synthetic posed-image datasets with analytic geometry: the inside of a textured sphere or of a
// bent tube (a torus ring; a straight cylinder when the bend radius is zero). Provides exact
// ray-surface intersections, ground-truth images and depth maps, and an SfM-like sparse cloud.

#include "dsnerf/field.hpp"
#include "dsnerf/geometry.hpp"
#include "dsnerf/image.hpp"
#include "dsnerf/pointcloud.hpp"
#include "dsnerf/rays.hpp"
#include "dsnerf/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dsnerf {

enum class SurfaceType { SphereInterior, Tube };

struct TextureParams {
  double frequency = 6.0;  // lattice cells per world unit of the first octave
  int octaves = 3;
  double contrast = 2.5;
  std::array<Vec3, 3> palette = {Vec3(0.55, 0.16, 0.18), Vec3(0.88, 0.47, 0.42), Vec3(0.97, 0.84, 0.74)};
  std::uint64_t seed = 7;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(x));
  h = mix64(h ^ static_cast<std::uint64_t>(y));
  h = mix64(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const Vec3 f(std::floor(p.x()), std::floor(p.y()), std::floor(p.z()));
  const Vec3 r = p - f;
  const Vec3 s = r.unaryExpr([](double v) { return v * v * (3.0 - 2.0 * v); });
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? s.x() : 1 - s.x()) * (dy ? s.y() : 1 - s.y()) * (dz ? s.z() : 1 - s.z());
    acc += w * lattice_value(ix + dx, iy + dy, iz + dz, seed);
  }
  return acc;
}

}  // namespace detail

struct AnalyticScene {
  SurfaceType type = SurfaceType::SphereInterior;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;       // sphere radius, or tube cross-section radius
  double bend_radius = 3.0;  // tube centreline circle radius in the xz-plane; <= 0 gives a straight tube
  Vec3 axis = Vec3::UnitZ();  // straight tube axis
  TextureParams texture;
  double shell_thickness = 0.02;
  double shell_sigma = 400.0;

  // Distance from p to the wall, positive inside.
  double inside_distance(const Vec3& p) const {
    const Vec3 q = p - center;
    if (type == SurfaceType::SphereInterior) return radius - q.norm();
    if (bend_radius <= 0.0) {
      const Vec3 a = axis.normalized();
      return radius - (q - q.dot(a) * a).norm();
    }
    const double rho = std::hypot(q.x(), q.z());
    return radius - std::hypot(rho - bend_radius, q.y());
  }

  bool contains(const Vec3& p) const { return inside_distance(p) > 0.0; }

  // Distance along the unit direction to the first wall hit, for origins inside the surface.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const {
    if (!contains(origin)) return std::nullopt;
    const Vec3 o = origin - center;
    if (type == SurfaceType::SphereInterior) {
      const double b = dir.dot(o);
      const double c = o.squaredNorm() - radius * radius;
      return -b + std::sqrt(b * b - c);
    }
    if (bend_radius <= 0.0) {
      const Vec3 a = axis.normalized();
      const Vec3 op = o - o.dot(a) * a;
      const Vec3 dp = dir - dir.dot(a) * a;
      const double qa = dp.squaredNorm();
      if (qa < 1e-14) return std::nullopt;
      const double qb = op.dot(dp);
      const double qc = op.squaredNorm() - radius * radius;
      return (-qb + std::sqrt(qb * qb - qa * qc)) / qa;
    }
    // Sphere tracing on the exact interior distance, then bisection on the crossing.
    double t = 0.0;
    double lo = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double f = inside_distance(origin + t * dir);
      if (f <= 0.0) break;
      lo = t;
      t += std::max(f, 1e-7);
      if (t > 1e6) return std::nullopt;
    }
    double hi = t;
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      (inside_distance(origin + mid * dir) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  Vec3 color_at(const Vec3& p) const {
    const auto& tx = texture;
    double sum = 0.0;
    double norm = 0.0;
    double amp = 1.0;
    for (int o = 0; o < tx.octaves; ++o) {
      sum += amp * detail::value_noise(p * (tx.frequency * std::ldexp(1.0, o)), tx.seed + o);
      norm += amp;
      amp *= 0.5;
    }
    const double v = std::clamp((sum / std::max(norm, 1e-12) - 0.5) * tx.contrast + 0.5, 0.0, 1.0);
    if (v < 0.5) return tx.palette[0] + (tx.palette[1] - tx.palette[0]) * (2.0 * v);
    return tx.palette[1] + (tx.palette[2] - tx.palette[1]) * (2.0 * v - 1.0);
  }

  Vec3 sample_surface(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    if (type == SurfaceType::SphereInterior) {
      Vec3 v(normal(rng), normal(rng), normal(rng));
      return center + radius * v.normalized();
    }
    const double theta = angle(rng);
    if (bend_radius <= 0.0) {
      std::uniform_real_distribution<double> along(-2.0 * radius, 2.0 * radius);
      const Vec3 a = axis.normalized();
      Vec3 u = a.unitOrthogonal();
      const Vec3 w = a.cross(u);
      return center + along(rng) * a + radius * (std::cos(theta) * u + std::sin(theta) * w);
    }
    const double phi = angle(rng);
    const Vec3 ring(std::cos(phi), 0.0, std::sin(phi));
    return center + (bend_radius + radius * std::cos(theta)) * ring + radius * std::sin(theta) * Vec3::UnitY();
  }

  // Emission model usable as a radiance field: a shell of density shell_sigma just beyond the wall.
  using Scalar = double;
  template <class DX, class DD>
  FieldQuery<double> query(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DD>&) const {
    FieldQuery<double> q{Eigen::VectorXd::Zero(x.cols()), Matrix3X<double>::Zero(3, x.cols())};
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const Vec3 p = x.col(i);
      const double sd = inside_distance(p);
      if (sd <= 0.0 && sd > -shell_thickness) q.sigma(i) = shell_sigma;
      q.color.col(i) = color_at(p);
    }
    return q;
  }
};

struct SynthOptions {
  int point_budget = 5000;
  double point_noise = 0.0;  // std-dev of Gaussian perturbation of cloud points (world units)
  std::uint64_t seed = 0;
};

inline std::optional<double> analytic_depth(const AnalyticScene& scene, const CameraPose& pose, const Intrinsics& intr,
                                            const Vec2& pixel) {
  const Ray r = pixel_to_ray(pose, intr, pixel, {1e-6, 1e9});
  return scene.intersect(r.origin, r.direction);
}

// Ground-truth RGB and depth, plus a synthetic SfM cloud whose visibility lists hold every view in
// which the point projects in-bounds and is not occluded.
inline SceneBundle generate_dataset(const AnalyticScene& scene, const std::vector<CameraPose>& trajectory,
                                    const Intrinsics& intr, const SynthOptions& opts = {}) {
  intr.validate();
  for (const auto& p : trajectory) {
    if (!scene.contains(p.position)) throw std::invalid_argument("camera position outside the analytic surface");
  }
  SceneBundle bundle;
  bundle.intrinsics = intr;
  bundle.poses = trajectory;
  for (std::size_t v = 0; v < trajectory.size(); ++v) {
    ImageBuffer rgb(intr.width, intr.height, 3);
    ImageBuffer depth(intr.width, intr.height, 1);
    for (int y = 0; y < intr.height; ++y) {
      for (int x = 0; x < intr.width; ++x) {
        const Ray r = pixel_to_ray(trajectory[v], intr, Vec2(x, y), {1e-6, 1e9});
        const auto t = scene.intersect(r.origin, r.direction);
        if (!t) throw std::invalid_argument("pixel ray misses the analytic surface");
        const Vec3 c = scene.color_at(r.at(*t));
        for (int ch = 0; ch < 3; ++ch) rgb.at(x, y, ch) = static_cast<float>(c(ch));
        depth.at(x, y, 0) = static_cast<float>(*t);
      }
    }
    bundle.images.push_back(std::move(rgb));
    bundle.depth_maps.push_back(std::move(depth));
    bundle.frame_ids.push_back(static_cast<int>(v));
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < opts.point_budget; ++i) {
    const Vec3 x = scene.sample_surface(rng);
    SparsePoint p;
    for (std::size_t v = 0; v < trajectory.size(); ++v) {
      const auto proj = project_point(x, trajectory[v], intr);
      if (!proj || !pixel_in_bounds(proj->pixel, intr)) continue;
      const Vec3 dir = (x - trajectory[v].position).normalized();
      const auto hit = scene.intersect(trajectory[v].position, dir);
      if (!hit || std::abs(*hit - proj->depth) > 1e-6 * std::max(1.0, proj->depth)) continue;
      p.visible_in.push_back(static_cast<int>(v));
    }
    const Vec3 jitter(noise(rng), noise(rng), noise(rng));
    if (p.visible_in.empty()) continue;
    p.position = x + opts.point_noise * jitter;
    p.color = scene.color_at(x);
    bundle.points.push_back(std::move(p));
  }
  return bundle;
}

// Keeps the listed views (in order), remapping point visibility and dropping unseen points.
inline SceneBundle select_views(const SceneBundle& in, const std::vector<int>& views) {
  SceneBundle out;
  out.intrinsics = in.intrinsics;
  out.bounds = in.bounds;
  std::vector<int> remap(in.view_count(), -1);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const int v = views[i];
    remap[v] = static_cast<int>(i);
    out.poses.push_back(in.poses[v]);
    out.images.push_back(in.images[v]);
    if (v < static_cast<int>(in.depth_maps.size())) out.depth_maps.push_back(in.depth_maps[v]);
    out.frame_ids.push_back(v < static_cast<int>(in.frame_ids.size()) ? in.frame_ids[v] : v);
  }
  for (const auto& p : in.points) {
    SparsePoint q{p.position, {}, p.color};
    for (int v : p.visible_in) {
      if (remap[v] >= 0) q.visible_in.push_back(remap[v]);
    }
    if (!q.visible_in.empty()) out.points.push_back(std::move(q));
  }
  return out;
}

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};

// Keeps every divisor-th frame; with alternation, even kept positions go to test and odd to train.
inline SplitIndices split_indices(int frame_count, int frame_rate_divisor, bool alternate) {
  if (frame_rate_divisor < 1) throw std::invalid_argument("frame-rate divisor must be >= 1");
  std::vector<int> kept;
  for (int f = 0; f < frame_count; f += frame_rate_divisor) kept.push_back(f);
  if (kept.size() < 2) throw std::invalid_argument("split keeps fewer than two frames");
  SplitIndices s;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    (alternate && i % 2 == 0 ? s.test : s.train).push_back(kept[i]);
  }
  return s;
}

inline std::pair<SceneBundle, SceneBundle> train_test_split(const SceneBundle& bundle, int frame_rate_divisor,
                                                            bool alternate) {
  const auto s = split_indices(static_cast<int>(bundle.view_count()), frame_rate_divisor, alternate);
  return {select_views(bundle, s.train), select_views(bundle, s.test)};
}

struct ArcTrajectory {
  int count = 30;
  double orbit_radius = 0.6;   // camera distance from the scene centre
  double arc_degrees = 300.0;  // total sweep of the camera around the vertical axis
  double height_wobble = 0.05;
  double look_offset_degrees = 0.0;  // yaw between the radial direction and the view direction
  double pitch_wobble_degrees = 10.0;
};

// Cameras sweep an arc in the xz-plane looking outward at the wall, with small vertical and pitch
// oscillation so consecutive poses differ in all six degrees of freedom.
inline std::vector<CameraPose> arc_trajectory(const Vec3& center, const ArcTrajectory& a) {
  std::vector<CameraPose> poses;
  for (int i = 0; i < a.count; ++i) {
    const double s = a.count > 1 ? static_cast<double>(i) / (a.count - 1) : 0.0;
    const double phi = s * a.arc_degrees * kPi / 180.0;
    const Vec3 radial(std::cos(phi), 0.0, std::sin(phi));
    const Vec3 pos = center + a.orbit_radius * radial + Vec3(0.0, a.height_wobble * std::sin(4.0 * kPi * s), 0.0);
    const double yaw = phi + a.look_offset_degrees * kPi / 180.0;
    const double pitch = a.pitch_wobble_degrees * kPi / 180.0 * std::sin(6.0 * kPi * s);
    const Vec3 dir(std::cos(yaw) * std::cos(pitch), std::sin(pitch), std::sin(yaw) * std::cos(pitch));
    poses.push_back(look_at(pos, pos + dir));
  }
  return poses;
}

}  // namespace dsnerf
