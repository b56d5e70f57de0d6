#pragma once

// SceneBundle: posed images plus a sparse point cloud, and its on-disk layout
//
//   scene.json         intrinsics, ordered frames (position + wxyz quaternion), optional bounds
//   images/NNNN.png    8-bit RGB
//   points.txt         sparse cloud (see pointcloud.hpp)
//   depth/NNNN.pfm     optional ground-truth depth

#include "dsnerf/geometry.hpp"
#include "dsnerf/image.hpp"
#include "dsnerf/pointcloud.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsnerf {

struct SceneBundle {
  Intrinsics intrinsics;
  std::vector<CameraPose> poses;
  std::vector<ImageBuffer> images;
  std::vector<SparsePoint> points;
  std::optional<DepthRange> bounds;
  std::vector<ImageBuffer> depth_maps;  // ground truth, empty for real data
  std::vector<int> frame_ids;           // capture index of each view in the source sequence

  std::size_t view_count() const { return poses.size(); }

  DepthRange ray_bounds() const { return bounds ? *bounds : scene_bounds(points, poses); }

  void validate() const {
    intrinsics.validate();
    if (images.size() != poses.size()) throw std::invalid_argument("scene: image and pose counts differ");
    for (const auto& img : images) {
      if (img.width != intrinsics.width || img.height != intrinsics.height || img.channels != 3) {
        throw std::invalid_argument("scene: image size does not match intrinsics");
      }
    }
    for (const auto& p : points) {
      if (p.visible_in.empty()) throw std::invalid_argument("scene: point with empty visibility");
      for (int v : p.visible_in) {
        if (v < 0 || v >= static_cast<int>(poses.size())) throw std::invalid_argument("scene: visibility index out of range");
      }
    }
  }
};

inline nlohmann::json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
               j.at("cy").get<double>(), j.at("width").get<int>(),  j.at("height").get<int>()};
  k.validate();
  return k;
}

inline nlohmann::json to_json(const CameraPose& p) {
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z}}};
}

// Accepts quaternions within `tolerance` of unit length and renormalizes them.
inline CameraPose pose_from_json(const nlohmann::json& j, double tolerance = 1e-6) {
  const auto& t = j.at("position");
  const auto& q = j.at("orientation");
  if (!t.is_array() || t.size() != 3 || !q.is_array() || q.size() != 4) {
    throw std::invalid_argument("pose needs position[3] and orientation[4]");
  }
  CameraPose p;
  p.position = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  Quat o{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
  const double n = o.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > tolerance || !p.position.allFinite()) {
    throw std::invalid_argument("pose orientation is not a unit quaternion");
  }
  p.orientation = o.normalized();
  return p;
}

inline std::string frame_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

inline std::string frame_name(std::size_t i, const char* ext) { return frame_stem(i) + "." + ext; }

inline void save_scene(const std::filesystem::path& dir, const SceneBundle& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.poses.size(); ++i) {
    auto f = to_json(scene.poses[i]);
    f["image"] = "images/" + frame_name(i, "png");
    if (i < scene.frame_ids.size()) f["frame_id"] = scene.frame_ids[i];
    write_png(dir / "images" / frame_name(i, "png"), scene.images[i]);
    if (i < scene.depth_maps.size()) {
      fs::create_directories(dir / "depth");
      f["depth"] = "depth/" + frame_name(i, "pfm");
      write_pfm(dir / "depth" / frame_name(i, "pfm"), scene.depth_maps[i]);
    }
    frames.push_back(f);
  }
  nlohmann::json j{{"intrinsics", to_json(scene.intrinsics)}, {"frames", frames}, {"points", "points.txt"}};
  if (scene.bounds) j["bounds"] = {{"near", scene.bounds->near}, {"far", scene.bounds->far}};
  std::ofstream(dir / "scene.json") << j.dump(2) << '\n';
  save_points(dir / "points.txt", scene.points);
}

inline SceneBundle load_scene(const std::filesystem::path& dir) {
  std::ifstream in(dir / "scene.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "scene.json").string());
  const auto j = nlohmann::json::parse(in);
  SceneBundle scene;
  scene.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  for (const auto& f : j.at("frames")) {
    scene.poses.push_back(pose_from_json(f));
    scene.images.push_back(read_png(dir / f.at("image").get<std::string>()));
    if (f.contains("depth")) scene.depth_maps.push_back(read_pfm(dir / f.at("depth").get<std::string>()));
    scene.frame_ids.push_back(f.value("frame_id", static_cast<int>(scene.frame_ids.size())));
  }
  const auto points_file = dir / j.value("points", std::string("points.txt"));
  if (std::filesystem::exists(points_file)) {
    scene.points = load_points(points_file, static_cast<int>(scene.poses.size()));
  }
  if (j.contains("bounds")) scene.bounds = DepthRange{j["bounds"].at("near"), j["bounds"].at("far")};
  scene.validate();
  return scene;
}

}  // namespace dsnerf
