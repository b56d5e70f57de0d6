#pragma once

// Checkpoint file: one line of JSON header terminated by '\n', followed by
// `parameter_count` little-endian IEEE-754 float64 values.
//
// Parameter order: for each trunk layer l: W_l (width x in), b_l (width x 1); density w (1 x width),
// b (1 x 1); color head A (head x (width + 6 L_d)), a (head x 1); color output B (3 x head),
// b (3 x 1). Every matrix is stored column-major.

#include "dsnerf/field.hpp"
#include "dsnerf/pointcloud.hpp"
#include "dsnerf/scene.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsnerf {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "dsnerf-checkpoint";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  DepthRange bounds;
  Intrinsics intrinsics;
  std::vector<CameraPose> observed_poses;
  long iteration = 0;
};

struct Checkpoint {
  FieldConfig architecture;
  CheckpointMeta meta;
  std::vector<double> parameters;

  template <class S>
  RadianceField<S> make_field() const {
    RadianceField<S> field(architecture, 0);
    field.set_flat_parameters(parameters);
    return field;
  }
};

inline nlohmann::json to_json(const FieldConfig& c) {
  return {{"trunk_layers", c.trunk_layers}, {"trunk_width", c.trunk_width}, {"head_width", c.head_width},
          {"pos_freqs", c.pos_freqs},       {"dir_freqs", c.dir_freqs},     {"center", {c.center.x(), c.center.y(), c.center.z()}},
          {"scale", c.scale}};
}

inline FieldConfig field_config_from_json(const nlohmann::json& j, FieldConfig c = {}) {
  c.trunk_layers = j.value("trunk_layers", c.trunk_layers);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.head_width = j.value("head_width", c.head_width);
  c.pos_freqs = j.value("pos_freqs", c.pos_freqs);
  c.dir_freqs = j.value("dir_freqs", c.dir_freqs);
  if (j.contains("center")) c.center = {j["center"][0].get<double>(), j["center"][1].get<double>(), j["center"][2].get<double>()};
  c.scale = j.value("scale", c.scale);
  return c;
}

inline std::string checkpoint_header(const Checkpoint& ck) {
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& p : ck.meta.observed_poses) poses.push_back(to_json(p));
  const nlohmann::json j{{"format", kCheckpointFormat},
                         {"version", kCheckpointVersion},
                         {"architecture", to_json(ck.architecture)},
                         {"parameter_count", ck.parameters.size()},
                         {"bounds", {{"near", ck.meta.bounds.near}, {"far", ck.meta.bounds.far}}},
                         {"intrinsics", to_json(ck.meta.intrinsics)},
                         {"observed_poses", poses},
                         {"iteration", ck.meta.iteration}};
  return j.dump();
}

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  out << checkpoint_header(ck) << '\n';
  out.write(reinterpret_cast<const char*>(ck.parameters.data()),
            static_cast<std::streamsize>(ck.parameters.size() * sizeof(double)));
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(out, ck);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw CheckpointError("empty checkpoint");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable checkpoint header: ") + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) throw CheckpointError("not a dsnerf checkpoint");
  if (j.value("version", -1) != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(j.value("version", -1)));
  }
  Checkpoint ck;
  ck.architecture = field_config_from_json(j.at("architecture"));
  ck.meta.bounds = {j.at("bounds").at("near").get<double>(), j.at("bounds").at("far").get<double>()};
  ck.meta.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  for (const auto& p : j.at("observed_poses")) ck.meta.observed_poses.push_back(pose_from_json(p));
  ck.meta.iteration = j.value("iteration", 0L);
  const auto count = j.at("parameter_count").get<std::size_t>();
  const RadianceField<double> probe(ck.architecture, 0);
  if (probe.parameter_count() != count) throw CheckpointError("parameter count does not match the architecture");
  ck.parameters.resize(count);
  in.read(reinterpret_cast<char*>(ck.parameters.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double))) throw CheckpointError("truncated checkpoint");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

template <class S>
Checkpoint make_checkpoint(const RadianceField<S>& field, CheckpointMeta meta) {
  return {field.config(), std::move(meta), field.flat_parameters()};
}

}  // namespace dsnerf
