// Command-line front end: synth, train, render, eval, ablate, serve, convert-colmap.

#include "dsnerf/dsnerf.hpp"
#include "dsnerf/renderservice.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsnerf;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return s.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2) << '\n'; }

// Shared plumbing: config file, run directory and the manifest written on completion.
struct Run {
  std::string config_path;
  std::string run_dir;
  json config = json::object();
  json outputs = json::array();
  std::string command;
  std::chrono::steady_clock::time_point started;
  std::string started_utc;

  void add_common(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--run-dir", run_dir, "output directory (default runs/<command>-<time>)");
  }

  fs::path begin(const std::string& name) {
    command = name;
    if (!config_path.empty()) config = read_json(config_path);
    if (run_dir.empty()) run_dir = config.value("run_dir", "runs/" + name + "-" + timestamp());
    fs::create_directories(run_dir);
    started = std::chrono::steady_clock::now();
    started_utc = timestamp();
    return run_dir;
  }

  void output(const fs::path& p) { outputs.push_back(fs::relative(p, run_dir).generic_string()); }

  void finish(const json& effective, const json& summary = json::object()) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json m{{"command", command},  {"started_utc", started_utc},   {"duration_s", secs},
           {"config", effective}, {"config_file", config_path}, {"outputs", outputs},
           {"summary", summary}};
    write_json(fs::path(run_dir) / "manifest.json", m);
    std::cout << "run directory: " << run_dir << "\n";
  }
};

// An option whose value comes from the command line when given, else from the config file, else
// from its default.
template <class T>
struct Setting {
  std::string key;
  T value;
  CLI::Option* opt = nullptr;

  void bind(CLI::App* app, const std::string& flag, const std::string& help) {
    opt = app->add_option(flag, value, help);
    opt->capture_default_str();
  }
  T resolve(const json& cfg) {
    if (opt && opt->count() == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
    return value;
  }
};

// Command-line overrides of TrainConfig fields, addressed by JSON pointer.
struct TrainOverrides {
  struct Entry {
    std::string flag;
    std::string pointer;
    bool integral = true;
    double number = 0;
    CLI::Option* opt = nullptr;
  };
  std::vector<Entry> entries{
      {"--iterations", "/iterations"},
      {"--k-unobserved", "/k_unobserved"},
      {"--color-rays", "/rays/color"},
      {"--depth-rays", "/rays/depth_observed"},
      {"--unobserved-rays", "/rays/depth_unobserved"},
      {"--regen-interval", "/regen_interval"},
      {"--lambda-d", "/weights/lambda_d", false},
      {"--lambda-kl", "/weights/lambda_kl", false},
      {"--lambda-s", "/weights/lambda_s", false},
      {"--sigma-kl", "/weights/sigma_kl", false},
      {"--lr", "/optimizer/learning_rate", false},
      {"--lr-final", "/optimizer/final_learning_rate", false},
      {"--seed", "/seed"},
      {"--samples", "/samples_per_ray"},
      {"--checkpoint-every", "/checkpoint_every"},
      {"--grad-clip", "/grad_clip", false},
      {"--workers", "/workers"},
      {"--chunk-patches", "/chunk_patches"},
      {"--trunk-layers", "/field/trunk_layers"},
      {"--trunk-width", "/field/trunk_width"},
      {"--head-width", "/field/head_width"},
      {"--pos-freqs", "/field/pos_freqs"},
      {"--dir-freqs", "/field/dir_freqs"},
      {"--near", "/bounds/near", false},
      {"--far", "/bounds/far", false}};
  bool double_precision = false;

  void bind(CLI::App* app) {
    for (auto& e : entries) {
      e.opt = app->add_option(e.flag, e.number, "override " + e.pointer.substr(1));
      if (e.integral) {
        e.opt->type_name("INT")->check([](const std::string& v) {
          return v.find_first_of(".eE") == std::string::npos ? std::string{} : std::string{"expected an integer"};
        });
      }
    }
    app->add_flag("--double", double_precision, "train in float64");
  }

  // Config-file values (under "train" if present, else top level) with flags applied on top.
  TrainConfig resolve(const json& cfg, TrainConfig base = {}) {
    json j = cfg.contains("train") ? cfg["train"] : cfg;
    for (const auto& e : entries) {
      if (!e.opt->count()) continue;
      const json::json_pointer ptr(e.pointer);
      if (e.integral) {
        j[ptr] = static_cast<long long>(e.number);
      } else {
        j[ptr] = e.number;
      }
    }
    if (j.contains("bounds") && (!j["bounds"].contains("near") || !j["bounds"].contains("far"))) {
      throw std::invalid_argument("bounds override needs both --near and --far");
    }
    double_precision = double_precision || cfg.value("double", false);
    return train_config_from_json(j, base);
  }
};

// ---- synth ----

struct SynthCmd {
  Run run;
  Setting<std::string> surface{"surface", "sphere"};
  Setting<int> views{"views", 30};
  Setting<int> resolution{"resolution", 64};
  Setting<double> fov{"fov_deg", 60.0};
  Setting<int> points{"points", 5000};
  Setting<double> noise{"point_noise", 0.0};
  Setting<std::uint64_t> seed{"seed", 0};
  Setting<double> orbit{"orbit_radius", 0.6};
  Setting<double> arc{"arc_degrees", 300.0};
  Setting<int> texture_seed{"texture_seed", 7};

  void bind(CLI::App* app) {
    run.add_common(app);
    surface.bind(app, "--surface", "sphere or tube");
    views.bind(app, "--views", "number of camera poses");
    resolution.bind(app, "--resolution", "image width and height");
    fov.bind(app, "--fov", "horizontal field of view in degrees");
    points.bind(app, "--points", "surface points drawn for the sparse cloud");
    noise.bind(app, "--point-noise", "Gaussian jitter of cloud points");
    seed.bind(app, "--seed", "point sampling seed");
    orbit.bind(app, "--orbit", "camera distance from the scene centre");
    arc.bind(app, "--arc", "angular sweep of the trajectory in degrees");
    texture_seed.bind(app, "--texture-seed", "procedural texture seed");
  }

  void exec() {
    const fs::path dir = run.begin("synth");
    const auto& c = run.config;
    AnalyticScene scene;
    scene.texture.seed = static_cast<std::uint64_t>(texture_seed.resolve(c));
    std::vector<CameraPose> poses;
    ArcTrajectory a;
    a.count = views.resolve(c);
    a.arc_degrees = arc.resolve(c);
    const std::string kind = surface.resolve(c);
    if (kind == "sphere") {
      a.orbit_radius = orbit.resolve(c);
      poses = arc_trajectory(scene.center, a);
    } else if (kind == "tube") {
      scene.type = SurfaceType::Tube;
      scene.radius = 0.5;
      scene.bend_radius = 3.0;
      // Fly along the bent centreline looking ahead.
      for (int i = 0; i < a.count; ++i) {
        const double phi = kPi / 180.0 * a.arc_degrees * i / std::max(1, a.count - 1) * 0.25;
        const Vec3 p(scene.bend_radius * std::cos(phi), 0.05 * std::sin(3 * phi), scene.bend_radius * std::sin(phi));
        const Vec3 ahead(scene.bend_radius * std::cos(phi + 0.3), 0.0, scene.bend_radius * std::sin(phi + 0.3));
        poses.push_back(look_at(p, ahead));
      }
    } else {
      throw std::invalid_argument("unknown surface '" + kind + "'");
    }
    const auto intr = Intrinsics::from_fov(resolution.resolve(c), resolution.value, fov.resolve(c));
    const auto data =
        generate_dataset(scene, poses, intr, SynthOptions{points.resolve(c), noise.resolve(c), seed.resolve(c)});
    save_scene(dir / "scene", data);
    run.output(dir / "scene" / "scene.json");
    run.finish(json{{"surface", kind},
                    {"views", a.count},
                    {"resolution", resolution.value},
                    {"fov_deg", fov.value},
                    {"points", points.value},
                    {"point_noise", noise.value},
                    {"seed", seed.value},
                    {"orbit_radius", orbit.value},
                    {"arc_degrees", arc.value},
                    {"texture_seed", texture_seed.value}},
               json{{"views", data.view_count()}, {"points", data.points.size()}});
  }
};

// ---- train ----

struct TrainCmd {
  Run run;
  TrainOverrides overrides;
  Setting<std::string> scene{"scene", ""};
  Setting<int> split_divisor{"split_divisor", 0};

  void bind(CLI::App* app) {
    run.add_common(app);
    scene.bind(app, "--scene", "scene directory (scene.json, images, points.txt)");
    split_divisor.bind(app, "--split-divisor", "if > 0, train on the alternate-frame training split");
    overrides.bind(app);
  }

  void exec() {
    const fs::path dir = run.begin("train");
    const auto& c = run.config;
    if (scene.resolve(c).empty()) throw std::invalid_argument("--scene is required");
    SceneBundle data = load_scene(scene.value);
    if (split_divisor.resolve(c) > 0) data = train_test_split(data, split_divisor.value, true).first;
    TrainConfig cfg = overrides.resolve(c);
    fs::create_directories(dir / "checkpoints");
    std::ofstream log(dir / "train_log.jsonl");
    run.output(dir / "train_log.jsonl");
    auto on_checkpoint = [&](const Checkpoint& ck) {
      const auto p = dir / "checkpoints" / ("iter_" + frame_stem(static_cast<std::size_t>(ck.meta.iteration)) + ".ckpt");
      save_checkpoint(p, ck);
      run.output(p);
    };
    std::cout << "training " << cfg.iterations << " iterations on " << data.view_count() << " views\n";
    TrainResult res = overrides.double_precision ? train<double>(data, cfg, &log, on_checkpoint)
                                                 : train<float>(data, cfg, &log, on_checkpoint);
    save_checkpoint(dir / "final.ckpt", res.checkpoint);
    run.output(dir / "final.ckpt");
    json summary{{"views", data.view_count()}};
    if (!res.log.empty()) summary["final"] = res.log.back().to_json();
    json eff = to_json(cfg);
    eff["scene"] = scene.value;
    eff["split_divisor"] = split_divisor.value;
    eff["double"] = overrides.double_precision;
    write_json(dir / "config.json", eff);
    run.output(dir / "config.json");
    run.finish(eff, summary);
  }
};

// ---- render ----

struct RenderCmd {
  Run run;
  Setting<std::string> checkpoint{"checkpoint", ""};
  Setting<std::string> trajectory{"trajectory", ""};
  Setting<int> width{"width", 0};
  Setting<int> height{"height", 0};
  Setting<double> fov{"fov_deg", 0.0};
  Setting<int> samples{"samples", 128};
  Setting<int> interpolate{"interpolate", 0};

  void bind(CLI::App* app) {
    run.add_common(app);
    checkpoint.bind(app, "--checkpoint", "trained checkpoint");
    trajectory.bind(app, "--trajectory", "pose list JSON (default: the training poses)");
    width.bind(app, "--width", "output width (default: training intrinsics)");
    height.bind(app, "--height", "output height (default: training intrinsics)");
    fov.bind(app, "--fov", "horizontal field of view in degrees (default: training intrinsics)");
    samples.bind(app, "--samples", "samples per ray");
    interpolate.bind(app, "--interpolate", "extra slerp poses inserted between consecutive poses");
  }

  void exec() {
    const fs::path dir = run.begin("render");
    const auto& c = run.config;
    if (checkpoint.resolve(c).empty()) throw std::invalid_argument("--checkpoint is required");
    const Checkpoint ck = load_checkpoint(checkpoint.value);
    std::vector<CameraPose> poses =
        trajectory.resolve(c).empty() ? ck.meta.observed_poses : load_trajectory(trajectory.value);
    if (interpolate.resolve(c) > 0 && poses.size() > 1) {
      std::vector<CameraPose> dense;
      for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
        for (int s = 0; s <= interpolate.value; ++s) {
          dense.push_back(interpolate_pose(poses[i], poses[i + 1], static_cast<double>(s) / (interpolate.value + 1)));
        }
      }
      dense.push_back(poses.back());
      poses = std::move(dense);
    }
    Intrinsics intr = ck.meta.intrinsics;
    const int w = width.resolve(c) > 0 ? width.value : intr.width;
    const int h = height.resolve(c) > 0 ? height.value : intr.height;
    const double f = fov.resolve(c) > 0 ? fov.value : 2.0 * std::atan(0.5 * intr.width / intr.fx) * 180.0 / kPi;
    if (w != intr.width || h != intr.height || fov.value > 0) intr = Intrinsics::from_fov(w, h, f);
    const auto n = render_trajectory(ck, poses, intr, dir / "frames", samples.resolve(c));
    save_trajectory(dir / "trajectory.json", poses);
    run.output(dir / "frames");
    run.output(dir / "trajectory.json");
    run.finish(json{{"checkpoint", checkpoint.value},
                    {"trajectory", trajectory.value},
                    {"width", w},
                    {"height", h},
                    {"fov_deg", f},
                    {"samples", samples.value},
                    {"interpolate", interpolate.value}},
               json{{"frames", n}});
  }
};

// ---- eval ----

struct EvalCmd {
  Run run;
  Setting<std::string> checkpoint{"checkpoint", ""};
  Setting<std::string> scene{"scene", ""};
  Setting<int> samples{"samples", 128};
  Setting<int> split_divisor{"split_divisor", 0};

  void bind(CLI::App* app) {
    run.add_common(app);
    checkpoint.bind(app, "--checkpoint", "trained checkpoint");
    scene.bind(app, "--scene", "scene directory with held-out views");
    samples.bind(app, "--samples", "samples per ray");
    split_divisor.bind(app, "--split-divisor", "if > 0, evaluate on the alternate-frame test split");
  }

  void exec() {
    const fs::path dir = run.begin("eval");
    const auto& c = run.config;
    if (checkpoint.resolve(c).empty() || scene.resolve(c).empty()) {
      throw std::invalid_argument("--checkpoint and --scene are required");
    }
    const Checkpoint ck = load_checkpoint(checkpoint.value);
    SceneBundle test = load_scene(scene.value);
    if (split_divisor.resolve(c) > 0) test = train_test_split(test, split_divisor.value, true).second;
    const auto field = ck.make_field<float>();
    const auto rep = evaluate_views(field, test, ck.meta.bounds, samples.resolve(c));
    json per_image = json::array();
    for (std::size_t v = 0; v < rep.views.size(); ++v) {
      json row{{"frame", v < test.frame_ids.size() ? test.frame_ids[v] : static_cast<int>(v)},
               {"psnr", psnr_for_log(rep.views[v].psnr)},
               {"ssim", rep.views[v].ssim}};
      if (rep.views[v].depth_rmse) row["depth_rmse"] = *rep.views[v].depth_rmse;
      per_image.push_back(row);
    }
    json mean{{"psnr", psnr_for_log(rep.mean_psnr)}, {"ssim", rep.mean_ssim}};
    if (rep.mean_depth_rmse) mean["depth_rmse"] = *rep.mean_depth_rmse;
    const json table{{"sequence", scene.value}, {"per_image", per_image}, {"mean", mean}};
    write_json(dir / "metrics.json", table);
    run.output(dir / "metrics.json");
    std::cout << std::fixed << std::setprecision(3) << "PSNR " << psnr_for_log(rep.mean_psnr) << "  SSIM "
              << rep.mean_ssim << "  (" << rep.views.size() << " views)\n";
    run.finish(json{{"checkpoint", checkpoint.value}, {"scene", scene.value}, {"samples", samples.value},
                    {"split_divisor", split_divisor.value}},
               mean);
  }
};

// ---- ablate ----

struct AblateCmd {
  Run run;
  TrainOverrides overrides;
  Setting<int> seeds{"seeds", 3};
  Setting<std::string> train_scene{"train_scene", ""};
  Setting<std::string> test_scene{"test_scene", ""};
  Setting<int> eval_samples{"eval_samples", 0};

  void bind(CLI::App* app) {
    run.add_common(app);
    seeds.bind(app, "--seeds", "benchmark seeds 0..n-1 (sphere benchmark only)");
    train_scene.bind(app, "--train-scene", "training scene directory (default: sphere benchmark)");
    test_scene.bind(app, "--test-scene", "held-out scene directory");
    eval_samples.bind(app, "--eval-samples", "samples per ray at evaluation (default: benchmark setting)");
    overrides.bind(app);
  }

  void exec() {
    const fs::path dir = run.begin("ablate");
    const auto& c = run.config;
    json results = json::array();
    const bool custom = !train_scene.resolve(c).empty();
    test_scene.resolve(c);
    eval_samples.resolve(c);
    json eff;
    auto record = [&](const std::string& label, const AblationTable& t) {
      std::cout << label << "\n" << t.format() << std::flush;
      results.push_back(json{{"label", label}, {"rows", t.to_json()}});
    };
    if (custom) {
      if (test_scene.value.empty()) throw std::invalid_argument("--test-scene is required with --train-scene");
      const auto cfg = overrides.resolve(c);
      eff = to_json(cfg);
      const auto tr = load_scene(train_scene.value);
      const auto te = load_scene(test_scene.value);
      const int es = eval_samples.value > 0 ? eval_samples.value : cfg.samples_per_ray;
      record(train_scene.value, overrides.double_precision ? run_ablation<double>(tr, te, cfg, es)
                                                           : run_ablation<float>(tr, te, cfg, es));
    } else {
      for (int s = 0; s < seeds.resolve(c); ++s) {
        const auto b = sphere_benchmark(static_cast<std::uint64_t>(s));
        auto base = b.config;
        base.seed = static_cast<std::uint64_t>(s);
        const auto cfg = overrides.resolve(c, base);
        if (s == 0) eff = to_json(cfg);
        const int es = eval_samples.value > 0 ? eval_samples.value : b.eval_samples;
        record("sphere benchmark seed " + std::to_string(s),
               overrides.double_precision ? run_ablation<double>(b.train, b.test, cfg, es)
                                          : run_ablation<float>(b.train, b.test, cfg, es));
      }
    }
    write_json(dir / "ablation.json", results);
    run.output(dir / "ablation.json");
    eff["seeds"] = seeds.value;
    eff["train_scene"] = train_scene.value;
    eff["test_scene"] = test_scene.value;
    run.finish(eff);
  }
};

// ---- serve ----

struct ServeCmd {
  Run run;
  Setting<std::string> checkpoint{"checkpoint", ""};
  Setting<std::string> host{"host", "127.0.0.1"};
  Setting<int> port{"port", 8080};
  Setting<int> max_concurrent{"max_concurrent", 2};
  Setting<std::string> static_dir{"static_dir", ""};

  void bind(CLI::App* app) {
    run.add_common(app);
    checkpoint.bind(app, "--checkpoint", "trained checkpoint");
    host.bind(app, "--host", "bind address");
    port.bind(app, "--port", "TCP port");
    max_concurrent.bind(app, "--max-concurrent", "renders in flight before 429");
    static_dir.bind(app, "--static", "directory served at / (viewer build)");
  }

  int exec() {
    run.begin("serve");
    const auto& c = run.config;
    if (checkpoint.resolve(c).empty()) throw std::invalid_argument("--checkpoint is required");
    ServiceOptions opts;
    opts.max_concurrent = max_concurrent.resolve(c);
    RenderService svc(load_checkpoint(checkpoint.value), opts);
    const json eff{{"checkpoint", checkpoint.value},
                   {"host", host.resolve(c)},
                   {"port", port.resolve(c)},
                   {"max_concurrent", opts.max_concurrent},
                   {"static_dir", static_dir.resolve(c)}};
    run.finish(eff, json{{"checkpoint_id", checkpoint_id(svc.checkpoint())}});
    std::cout << "listening on http://" << host.value << ":" << port.value << std::endl;
    return serve(svc, host.value, port.value, static_dir.value) ? 0 : 1;
  }
};

// ---- convert-colmap ----

struct ColmapCmd {
  Run run;
  Setting<std::string> points{"points3d", ""};
  Setting<std::string> images{"images", ""};

  void bind(CLI::App* app) {
    run.add_common(app);
    points.bind(app, "--points3d", "COLMAP points3D.txt");
    images.bind(app, "--images", "COLMAP images.txt, to map image ids to frame order");
  }

  void exec() {
    const fs::path dir = run.begin("convert-colmap");
    const auto& c = run.config;
    if (points.resolve(c).empty()) throw std::invalid_argument("--points3d is required");
    std::ifstream pin(points.value);
    if (!pin) throw std::runtime_error("cannot open " + points.value);
    std::map<long, int> index;
    if (!images.resolve(c).empty()) {
      std::ifstream iin(images.value);
      if (!iin) throw std::runtime_error("cannot open " + images.value);
      index = colmap_image_index(iin);
    }
    const auto cloud = convert_colmap_points(pin, images.value.empty() ? nullptr : &index);
    save_points(dir / "points.txt", cloud);
    run.output(dir / "points.txt");
    run.finish(json{{"points3d", points.value}, {"images", images.value}}, json{{"points", cloud.size()}});
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-supervised radiance field trainer and renderer"};
  app.require_subcommand(1);
  SynthCmd synth;
  TrainCmd train_cmd;
  RenderCmd render;
  EvalCmd eval;
  AblateCmd ablate;
  ServeCmd serve_cmd;
  ColmapCmd colmap;
  synth.bind(app.add_subcommand("synth", "generate a synthetic posed-image dataset"));
  train_cmd.bind(app.add_subcommand("train", "train a field on a scene"));
  render.bind(app.add_subcommand("render", "render RGB and depth along a trajectory"));
  eval.bind(app.add_subcommand("eval", "PSNR / SSIM on held-out views"));
  ablate.bind(app.add_subcommand("ablate", "three-row loss ablation"));
  serve_cmd.bind(app.add_subcommand("serve", "HTTP render service"));
  colmap.bind(app.add_subcommand("convert-colmap", "convert COLMAP points3D.txt to the point format"));
  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synth")) synth.exec();
    if (app.got_subcommand("train")) train_cmd.exec();
    if (app.got_subcommand("render")) render.exec();
    if (app.got_subcommand("eval")) eval.exec();
    if (app.got_subcommand("ablate")) ablate.exec();
    if (app.got_subcommand("serve")) return serve_cmd.exec();
    if (app.got_subcommand("convert-colmap")) colmap.exec();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
