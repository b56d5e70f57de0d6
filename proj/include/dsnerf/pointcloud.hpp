#pragma once

// Sparse SfM point cloud: loading, projection, and reference depths for depth rays.

#include "dsnerf/geometry.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dsnerf {

struct SparsePoint {
  Vec3 position = Vec3::Zero();
  std::vector<int> visible_in;
  std::optional<Vec3> color;
};

struct SparseDepthSample {
  int view_index = 0;
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // distance along the unit-direction ray, not camera z
  int point_index = -1;
};

struct Projection {
  Vec2 pixel;
  double depth;
};

// Pinhole projection. Empty when the point is at or behind the camera plane.
inline std::optional<Projection> project_point(const Vec3& point, const CameraPose& pose, const Intrinsics& intr) {
  const Vec3 pc = pose.to_camera(point);
  if (pc.z() <= 1e-6) return std::nullopt;
  const double u = intr.fx * pc.x() / pc.z() + intr.cx - 0.5;
  const double v = intr.fy * pc.y() / pc.z() + intr.cy - 0.5;
  return Projection{{u, v}, pc.norm()};
}

inline bool pixel_in_bounds(const Vec2& px, const Intrinsics& intr) {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= intr.width - 1 && px.y() <= intr.height - 1;
}

struct ObservedView {
  int index = 0;
};

// A generated view between observed views `parent_a` and `parent_b`.
struct InterpolatedView {
  int parent_a = 0;
  int parent_b = 0;
};

using ViewSource = std::variant<ObservedView, InterpolatedView>;

struct DepthRange {
  double near = 0.0;
  double far = std::numeric_limits<double>::infinity();
};

// Samples for every point visible in the view (or either parent) that projects in front of
// the camera, inside [0, w-1] x [0, h-1], with depth strictly inside `range`.
inline std::vector<SparseDepthSample> sparse_depth_for_view(const std::vector<SparsePoint>& cloud,
                                                            const ViewSource& source, const CameraPose& pose,
                                                            const Intrinsics& intr, const DepthRange& range = {}) {
  auto visible = [&](const SparsePoint& p) {
    auto has = [&](int v) { return std::find(p.visible_in.begin(), p.visible_in.end(), v) != p.visible_in.end(); };
    if (const auto* ob = std::get_if<ObservedView>(&source)) return has(ob->index);
    const auto& nv = std::get<InterpolatedView>(source);
    return has(nv.parent_a) || has(nv.parent_b);
  };
  const int view_tag = std::holds_alternative<ObservedView>(source) ? std::get<ObservedView>(source).index : -1;

  std::vector<SparseDepthSample> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!visible(cloud[i])) continue;
    const auto proj = project_point(cloud[i].position, pose, intr);
    if (!proj || !pixel_in_bounds(proj->pixel, intr)) continue;
    if (!(proj->depth > range.near && proj->depth < range.far)) continue;
    out.push_back({view_tag, proj->pixel, proj->depth, static_cast<int>(i)});
  }
  return out;
}

// Near/far ray bounds: 0.5x the smallest and 2x the largest camera-to-visible-point distance.
inline DepthRange scene_bounds(const std::vector<SparsePoint>& cloud, const std::vector<CameraPose>& poses) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& p : cloud) {
    for (int v : p.visible_in) {
      if (v < 0 || v >= static_cast<int>(poses.size())) continue;
      const double d = (p.position - poses[v].position).norm();
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  if (!(hi > 0.0)) throw std::invalid_argument("cannot derive scene bounds from an empty point cloud");
  return {0.5 * lo, 2.0 * hi};
}

class PointCloudFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text format, one point per line: x y z r g b n v1 ... vn. '#' starts a comment line.
inline std::vector<SparsePoint> parse_points(std::istream& in, int view_count = -1) {
  std::vector<SparsePoint> cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    SparsePoint p;
    Vec3 rgb;
    int n = 0;
    if (!(ss >> p.position.x() >> p.position.y() >> p.position.z() >> rgb.x() >> rgb.y() >> rgb.z() >> n) || n < 1) {
      throw PointCloudFormatError("points line " + std::to_string(line_no) + ": malformed record");
    }
    p.color = rgb;
    p.visible_in.resize(n);
    for (int& v : p.visible_in) {
      if (!(ss >> v) || v < 0 || (view_count >= 0 && v >= view_count)) {
        throw PointCloudFormatError("points line " + std::to_string(line_no) + ": bad view index");
      }
    }
    cloud.push_back(std::move(p));
  }
  return cloud;
}

inline std::vector<SparsePoint> load_points(const std::filesystem::path& path, int view_count = -1) {
  std::ifstream in(path);
  if (!in) throw PointCloudFormatError("cannot open " + path.string());
  return parse_points(in, view_count);
}

inline void write_points(std::ostream& out, const std::vector<SparsePoint>& cloud) {
  out << std::setprecision(17);
  for (const auto& p : cloud) {
    const Vec3 rgb = p.color.value_or(Vec3::Constant(0.5));
    out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << rgb.x() << ' ' << rgb.y() << ' '
        << rgb.z() << ' ' << p.visible_in.size();
    for (int v : p.visible_in) out << ' ' << v;
    out << '\n';
  }
}

inline void save_points(const std::filesystem::path& path, const std::vector<SparsePoint>& cloud) {
  std::ofstream out(path);
  if (!out) throw PointCloudFormatError("cannot write " + path.string());
  write_points(out, cloud);
}

// Reads COLMAP images.txt and maps IMAGE_ID to a zero-based view index ordered by image name.
inline std::map<long, int> colmap_image_index(std::istream& images_txt) {
  std::vector<std::pair<std::string, long>> named;
  std::string line;
  bool pose_line = true;
  while (std::getline(images_txt, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (pose_line) {
      // IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME
      std::istringstream ss(line);
      long id = 0;
      double skip = 0;
      long cam = 0;
      std::string name;
      ss >> id;
      for (int i = 0; i < 7; ++i) ss >> skip;
      if (!(ss >> cam >> name)) throw PointCloudFormatError("malformed images.txt pose line");
      named.emplace_back(name, id);
    }
    pose_line = !pose_line;
  }
  std::sort(named.begin(), named.end());
  std::map<long, int> index;
  for (std::size_t i = 0; i < named.size(); ++i) index[named[i].second] = static_cast<int>(i);
  return index;
}

// Converts COLMAP points3D.txt (POINT3D_ID X Y Z R G B ERROR TRACK[]) to SparsePoints.
// Without an image map, IMAGE_ID n becomes view n-1.
inline std::vector<SparsePoint> convert_colmap_points(std::istream& points3d_txt,
                                                      const std::map<long, int>* image_index = nullptr) {
  std::vector<SparsePoint> cloud;
  std::string line;
  while (std::getline(points3d_txt, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    long id = 0;
    double r = 0, g = 0, b = 0, err = 0;
    SparsePoint p;
    if (!(ss >> id >> p.position.x() >> p.position.y() >> p.position.z() >> r >> g >> b >> err)) {
      throw PointCloudFormatError("malformed points3D.txt line for point " + std::to_string(id));
    }
    p.color = Vec3(r / 255.0, g / 255.0, b / 255.0);
    long image_id = 0;
    long point2d = 0;
    while (ss >> image_id >> point2d) {
      int view = -1;
      if (image_index) {
        const auto it = image_index->find(image_id);
        if (it == image_index->end()) continue;
        view = it->second;
      } else {
        view = static_cast<int>(image_id - 1);
      }
      if (view >= 0 && std::find(p.visible_in.begin(), p.visible_in.end(), view) == p.visible_in.end()) {
        p.visible_in.push_back(view);
      }
    }
    if (p.visible_in.empty()) continue;
    std::sort(p.visible_in.begin(), p.visible_in.end());
    cloud.push_back(std::move(p));
  }
  return cloud;
}

}  // namespace dsnerf
