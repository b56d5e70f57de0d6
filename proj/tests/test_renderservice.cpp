#include "dsnerf/renderservice.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace dsnerf;

namespace {

Checkpoint service_checkpoint() {
  FieldConfig fc;
  fc.trunk_layers = 2;
  fc.trunk_width = 16;
  fc.head_width = 8;
  fc.pos_freqs = 3;
  fc.dir_freqs = 1;
  RadianceField<double> f(fc, 21);
  const std::vector<CameraPose> poses{CameraPose{{0.1, 0, 0}, Quat::identity()},
                                      CameraPose{{0.2, 0, 0}, Quat::from_axis_angle(Vec3::UnitY(), 0.2)}};
  return make_checkpoint(f, CheckpointMeta{{0.1, 2.5}, Intrinsics::from_fov(32, 32, 60.0), poses, 10});
}

ServiceOptions quiet(int concurrent = 2) {
  ServiceOptions o;
  o.max_concurrent = concurrent;
  o.log_requests = false;
  return o;
}

const std::string kRequest =
    R"({"position":[0.1,0,0],"orientation":[1,0,0,0],"width":128,"height":128,"fov_deg":60,"samples":32})";

}  // namespace

TEST(RenderService, InfoDescribesCheckpoint) {
  RenderService svc(service_checkpoint(), quiet());
  const auto r = svc.info();
  EXPECT_EQ(r.status, 200);
  const auto j = nlohmann::json::parse(r.body);
  EXPECT_EQ(j["bounds"]["near"], 0.1);
  EXPECT_EQ(j["intrinsics"]["width"], 32);
  EXPECT_EQ(j["checkpoint_id"].get<std::string>().size(), 16u);
  EXPECT_TRUE(j.contains("suggested_start_pose"));
  EXPECT_EQ(nlohmann::json::parse(svc.observed_trajectory().body)["poses"].size(), 2u);
}

TEST(RenderService, RendersPng) {
  RenderService svc(service_checkpoint(), quiet());
  const auto r = svc.render(kRequest);
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(r.content_type, "image/png");
  const auto img = decode_png(std::vector<std::uint8_t>(r.body.begin(), r.body.end()));
  EXPECT_EQ(img.width, 128);
  EXPECT_EQ(img.height, 128);
}

TEST(RenderService, RendersDepthPfm) {
  RenderService svc(service_checkpoint(), quiet());
  auto req = nlohmann::json::parse(kRequest);
  req["output"] = "depth";
  req["width"] = 20;
  req["height"] = 10;
  const auto r = svc.render(req.dump());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "application/x-pfm");
  const auto d = decode_pfm(std::vector<std::uint8_t>(r.body.begin(), r.body.end()));
  EXPECT_EQ(d.channels, 1);
  EXPECT_EQ(d.width, 20);
}

TEST(RenderService, IdenticalRequestsGiveIdenticalBytes) {
  RenderService svc(service_checkpoint(), quiet());
  EXPECT_EQ(svc.render(kRequest).body, svc.render(kRequest).body);
  RenderService other(service_checkpoint(), quiet());
  EXPECT_EQ(svc.render(kRequest).body, other.render(kRequest).body);
}

TEST(RenderService, BadRequestsAre400) {
  RenderService svc(service_checkpoint(), quiet());
  for (const std::string body :
       {std::string(R"({"position":[0,0,0],"orientation":[2,0,0,0]})"), std::string("not json"),
        std::string(R"({"position":[0,0],"orientation":[1,0,0,0]})"),
        std::string(R"({"position":[0,0,0],"orientation":[1,0,0,0],"width":0})"),
        std::string(R"({"position":[0,0,0],"orientation":[1,0,0,0],"samples":1})"),
        std::string(R"({"position":[0,0,0],"orientation":[1,0,0,0],"output":"normals"})"),
        std::string(R"({"position":[0,0,0],"orientation":[1,0,0,0],"fov_deg":180})"), std::string("[1,2]")}) {
    const auto r = svc.render(body);
    EXPECT_EQ(r.status, 400) << body;
    EXPECT_TRUE(nlohmann::json::parse(r.body).contains("error"));
  }
}

TEST(RenderService, SaturationGives429) {
  RenderService svc(service_checkpoint(), quiet(1));
  const std::string heavy =
      R"({"position":[0.1,0,0],"orientation":[1,0,0,0],"width":256,"height":256,"samples":128})";
  std::atomic<int> ok{0}, busy{0};
  std::vector<std::thread> clients;
  for (int i = 0; i < 6; ++i) {
    clients.emplace_back([&] {
      const int s = svc.render(heavy).status;
      if (s == 200) ++ok;
      if (s == 429) ++busy;
    });
  }
  for (auto& t : clients) t.join();
  EXPECT_GE(ok.load(), 1);
  EXPECT_GE(busy.load(), 1);
  EXPECT_EQ(ok.load() + busy.load(), 6);
  EXPECT_EQ(svc.render(kRequest).status, 200);
}

TEST(RenderService, HttpEndpoints) {
  RenderService svc(service_checkpoint(), quiet());
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto info = client.Get("/info");
  ASSERT_TRUE(info);
  EXPECT_EQ(info->status, 200);
  EXPECT_EQ(info->get_header_value("Access-Control-Allow-Origin"), "*");

  const auto a = client.Post("/render", kRequest, "application/json");
  const auto b = client.Post("/render", kRequest, "application/json");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(a->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(a->body, b->body);
  EXPECT_EQ(a->body, svc.render(kRequest).body);

  const auto bad = client.Post("/render", R"({"position":[0,0,0],"orientation":[0.5,0,0,0]})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  const auto traj = client.Get("/trajectory/observed");
  ASSERT_TRUE(traj);
  EXPECT_EQ(nlohmann::json::parse(traj->body)["poses"].size(), 2u);

  const auto pre = client.Options("/render");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);

  server.stop();
  loop.join();
}

TEST(RenderService, Soak) {
  RenderService svc(service_checkpoint(), quiet());
  const auto first = svc.render(kRequest).body;
  for (int i = 0; i < 20; ++i) {
    auto req = nlohmann::json::parse(kRequest);
    req["position"] = {0.01 * i, 0.0, 0.0};
    req["width"] = 32;
    req["height"] = 24;
    EXPECT_EQ(svc.render(req.dump()).status, 200);
  }
  EXPECT_EQ(svc.render(kRequest).body, first);
}
