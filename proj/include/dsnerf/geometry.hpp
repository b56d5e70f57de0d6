#pragma once

// Camera pose algebra and interpolation of unobserved views.
//
// Conventions used throughout the library:
//   * quaternions are scalar-first (w, x, y, z) and map camera frame -> world frame
//   * camera frame is x right, y down, z forward (pinhole looks along +z)
//   * pixel coordinates are index coordinates: integer values are pixel centres,
//     pixel (i, j) covers [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsnerf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quat identity() { return {}; }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 n = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), n.x() * s, n.y() * s, n.z() * s};
  }

  static Quat from_matrix(const Mat3& r) {
    const Eigen::Quaterniond q(r);
    return Quat{q.w(), q.x(), q.y(), q.z()}.normalized();
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  // Inverse of a unit quaternion.
  Quat inverse() const { return conjugate(); }

  Quat operator-() const { return {-w, -x, -y, -z}; }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  Vec3 vec() const { return {x, y, z}; }

  Mat3 to_matrix() const {
    Mat3 m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
  }

  Vec3 rotate(const Vec3& v) const {
    // v' = v + 2 u x (u x v + w v)
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + w * t + u.cross(t);
  }

  bool operator==(const Quat&) const = default;
};

// Rotation angle in [0, pi] of the relative rotation between two unit quaternions.
inline double angular_distance(const Quat& a, const Quat& b) {
  const Quat rel = a.inverse() * b;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w));
}

struct CameraPose {
  Vec3 position = Vec3::Zero();
  Quat orientation;

  CameraPose inverse() const {
    const Quat inv = orientation.inverse();
    return {-inv.rotate(position), inv};
  }

  // this * other: apply other first, then this.
  CameraPose compose(const CameraPose& other) const {
    return {position + orientation.rotate(other.position), (orientation * other.orientation).normalized()};
  }

  Vec3 to_world(const Vec3& p_cam) const { return orientation.rotate(p_cam) + position; }
  Vec3 to_camera(const Vec3& p_world) const { return orientation.inverse().rotate(p_world - position); }

  bool operator==(const CameraPose&) const = default;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0) || width <= 0 || height <= 0 || !(cx > 0.0 && cx < width) ||
        !(cy > 0.0 && cy < height)) {
      throw std::invalid_argument("invalid pinhole intrinsics");
    }
  }

  // Square-pixel camera with the principal point at the image centre.
  static Intrinsics from_fov(int width, int height, double fov_deg) {
    const double f = 0.5 * width / std::tan(0.5 * fov_deg * kPi / 180.0);
    return {f, f, 0.5 * width, 0.5 * height, width, height};
  }
};

// Pose at `position` whose forward (+z) axis points at `target`.
inline CameraPose look_at(const Vec3& position, const Vec3& target, const Vec3& world_up = Vec3::UnitY()) {
  const Vec3 forward = (target - position).normalized();
  // right = down x forward with down = -up
  Vec3 right = forward.cross(world_up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return {position, Quat::from_matrix(r)};
}

namespace detail {

inline void require_unit(const Quat& q, const char* name) {
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string("quaternion '") + name + "' is not unit length");
  }
}

// q^alpha for a unit quaternion.
inline Quat unit_pow(const Quat& q, double alpha) {
  const double s = q.vec().norm();
  const double half_angle = std::atan2(s, q.w);
  if (s < 1e-300) return Quat::identity();
  const Vec3 axis = q.vec() / s;
  const double a = alpha * half_angle;
  const double sa = std::sin(a);
  return {std::cos(a), axis.x() * sa, axis.y() * sa, axis.z() * sa};
}

}  // namespace detail

// qa (qa^-1 qb)^alpha along the shorter arc.
inline Quat quat_slerp(const Quat& qa, const Quat& qb_in, double alpha) {
  detail::require_unit(qa, "qa");
  detail::require_unit(qb_in, "qb");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("slerp alpha outside [0, 1]");

  const Quat a = qa.normalized();
  Quat b = qb_in.normalized();
  double d = a.dot(b);
  if (d < 0.0) {
    b = -b;
    d = -d;
  }
  if (d > 1.0 - 1e-9) {
    const Quat l{(1 - alpha) * a.w + alpha * b.w, (1 - alpha) * a.x + alpha * b.x,
                 (1 - alpha) * a.y + alpha * b.y, (1 - alpha) * a.z + alpha * b.z};
    return l.normalized();
  }
  return (a * detail::unit_pow(a.inverse() * b, alpha)).normalized();
}

inline CameraPose interpolate_pose(const CameraPose& pa, const CameraPose& pb, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("interpolation alpha outside [0, 1]");
  if (alpha == 0.0) {
    detail::require_unit(pb.orientation, "qb");
    return pa;
  }
  return {(1.0 - alpha) * pa.position + alpha * pb.position, quat_slerp(pa.orientation, pb.orientation, alpha)};
}

// A generated view together with the observed pair it was interpolated from.
struct InterpolatedPose {
  CameraPose pose;
  int parent_a = 0;
  int parent_b = 0;
  double alpha = 0.0;
};

// k poses per consecutive pair, alpha ~ U(0, 1) drawn independently per pose, open interval.
inline std::vector<InterpolatedPose> generate_unobserved_poses(const std::vector<CameraPose>& observed, int k,
                                                               std::mt19937_64& rng) {
  std::vector<InterpolatedPose> out;
  if (k <= 0 || observed.size() < 2) return out;
  out.reserve(static_cast<std::size_t>(k) * (observed.size() - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t b = 0; b + 1 < observed.size(); ++b) {
    for (int j = 0; j < k; ++j) {
      double alpha = unit(rng);
      while (alpha <= 0.0) alpha = unit(rng);
      out.push_back({interpolate_pose(observed[b], observed[b + 1], alpha), static_cast<int>(b),
                     static_cast<int>(b + 1), alpha});
    }
  }
  return out;
}

inline std::vector<InterpolatedPose> generate_unobserved_poses(const std::vector<CameraPose>& observed, int k,
                                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return generate_unobserved_poses(observed, k, rng);
}

}  // namespace dsnerf
