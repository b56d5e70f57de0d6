#pragma once

// HTTP render endpoint over a trained checkpoint.
//
//   GET  /info                 {architecture, bounds, intrinsics, checkpoint_id, suggested_start_pose}
//   POST /render               {position, orientation, width, height, fov_deg, samples, output}
//                              -> image/png (rgb) or application/x-pfm (depth)
//   GET  /trajectory/observed  {"poses": [...]} training poses

#include "dsnerf/checkpoint.hpp"
#include "dsnerf/renderer.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <semaphore>
#include <string>
#include <utility>

namespace dsnerf {

struct ServiceOptions {
  int max_concurrent = 2;
  int default_width = 128;
  int default_height = 128;
  int default_samples = 64;
  double default_fov_deg = 60.0;
  int max_resolution = 2048;
  int max_samples = 1024;
  bool log_requests = true;
};

struct HttpReply {
  int status = 200;
  std::string content_type;
  std::string body;
};

struct RenderRequest {
  CameraPose pose;
  int width = 128;
  int height = 128;
  double fov_deg = 60.0;
  int samples = 64;
  bool depth = false;
};

inline std::string checkpoint_id(const Checkpoint& ck) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(ck.parameters.data());
  for (std::size_t i = 0; i < ck.parameters.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class RenderService {
 public:
  RenderService(Checkpoint ck, ServiceOptions options)
      : checkpoint_(std::move(ck)),
        options_(options),
        field_(checkpoint_.make_field<float>()),
        id_(checkpoint_id(checkpoint_)),
        slots_(std::max(1, options.max_concurrent)) {}

  HttpReply info() const {
    nlohmann::json j{{"architecture", to_json(checkpoint_.architecture)},
                     {"bounds", {{"near", checkpoint_.meta.bounds.near}, {"far", checkpoint_.meta.bounds.far}}},
                     {"intrinsics", to_json(checkpoint_.meta.intrinsics)},
                     {"defaults", {{"width", options_.default_width}, {"height", options_.default_height},
                                   {"fov_deg", options_.default_fov_deg}, {"samples", options_.default_samples}}},
                     {"checkpoint_id", id_},
                     {"iteration", checkpoint_.meta.iteration}};
    if (!checkpoint_.meta.observed_poses.empty()) j["suggested_start_pose"] = to_json(checkpoint_.meta.observed_poses.front());
    return {200, "application/json", j.dump()};
  }

  HttpReply observed_trajectory() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : checkpoint_.meta.observed_poses) list.push_back(to_json(p));
    return {200, "application/json", nlohmann::json{{"poses", list}}.dump()};
  }

  RenderRequest parse_render_request(const std::string& body) const {
    const auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
    RenderRequest r;
    r.pose = pose_from_json(j, 1e-3);
    r.width = j.value("width", options_.default_width);
    r.height = j.value("height", options_.default_height);
    r.fov_deg = j.value("fov_deg", options_.default_fov_deg);
    r.samples = j.value("samples", options_.default_samples);
    const std::string output = j.value("output", std::string("rgb"));
    if (output != "rgb" && output != "depth") throw std::invalid_argument("output must be \"rgb\" or \"depth\"");
    r.depth = output == "depth";
    if (r.width < 1 || r.height < 1 || r.width > options_.max_resolution || r.height > options_.max_resolution) {
      throw std::invalid_argument("resolution out of range");
    }
    if (!(r.fov_deg > 0.0 && r.fov_deg < 180.0)) throw std::invalid_argument("fov_deg must be in (0, 180)");
    if (r.samples < 2 || r.samples > options_.max_samples) throw std::invalid_argument("samples out of range");
    return r;
  }

  HttpReply render(const std::string& body) {
    RenderRequest req;
    try {
      req = parse_render_request(body);
    } catch (const std::exception& e) {
      return error(400, e.what());
    }
    if (!slots_.try_acquire()) return error(429, "render capacity exhausted, retry later");
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const auto start = std::chrono::steady_clock::now();
    const auto intr = Intrinsics::from_fov(req.width, req.height, req.fov_deg);
    auto out = render_view(field_, req.pose, intr, checkpoint_.meta.bounds, req.samples);
    HttpReply reply;
    if (req.depth) {
      const auto bytes = encode_pfm(out.depth);
      reply = {200, "application/x-pfm", std::string(bytes.begin(), bytes.end())};
    } else {
      out.rgb.clamp01();
      const auto bytes = encode_png(out.rgb);
      reply = {200, "image/png", std::string(bytes.begin(), bytes.end())};
    }
    if (options_.log_requests) {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      std::clog << "render " << req.width << "x" << req.height << " samples=" << req.samples
                << (req.depth ? " depth" : " rgb") << " " << ms << " ms\n";
    }
    return reply;
  }

  void mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const HttpReply& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
      res.set_header("Access-Control-Allow-Origin", "*");
    };
    server.Get("/info", [this, send](const httplib::Request&, httplib::Response& res) { send(res, info()); });
    server.Get("/trajectory/observed",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, observed_trajectory()); });
    server.Post("/render", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, render(req.body)); });
    server.Options("/render", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "POST, OPTIONS");
      res.status = 204;
    });
  }

  const Checkpoint& checkpoint() const { return checkpoint_; }

 private:
  static HttpReply error(int status, const std::string& message) {
    return {status, "application/json", nlohmann::json{{"error", message}}.dump()};
  }

  Checkpoint checkpoint_;
  ServiceOptions options_;
  RadianceField<float> field_;
  std::string id_;
  std::counting_semaphore<> slots_;
};

// Blocks serving on host:port; `static_dir`, when set, is served at "/".
inline bool serve(RenderService& service, const std::string& host, int port,
                  const std::string& static_dir = {}) {
  httplib::Server server;
  service.mount(server);
  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
  return server.listen(host, port);
}

}  // namespace dsnerf
