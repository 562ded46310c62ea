#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "spgraph/errors.hpp"
#include "spgraph/graph.hpp"
#include "spgraph/metrics.hpp"
#include "spgraph/service.hpp"
#include "spgraph/synth.hpp"

using namespace spgraph;
using nlohmann::json;

namespace {

std::shared_ptr<const Pipeline> tiny_pipeline() {
  SuperpixelConfig sc;
  sc.cell = 8;
  sc.levels = 2;
  sc.base_width = 4;
  sc.feat_channels = 4;
  sc.zero_init_heads = false;
  sc.seed = 3;
  GatConfig gc;
  gc.in_channels = 4;
  gc.hidden = 8;
  gc.layers = 2;
  return std::make_shared<const Pipeline>(SuperpixelNet<float>(sc), GatModel<float>(gc));
}

std::string png_b64(const Raster<float>& rgb) {
  std::vector<uint16_t> s(rgb.data.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = static_cast<uint16_t>(std::lround(std::clamp(rgb.data[i], 0.0f, 1.0f) * 255));
  const auto bytes = encode_png(rgb.width, rgb.height, 3, 8, s);
  return base64_encode(bytes);
}

struct Running {
  Service service;
  std::thread thread;
  httplib::Client client;

  explicit Running(std::shared_ptr<const Pipeline> p)
      : service(std::move(p)), client("127.0.0.1", service.bind("127.0.0.1", 0)) {
    thread = std::thread([this] { service.run(); });
    client.set_read_timeout(60, 0);
    for (int i = 0; i < 200 && !client.Get("/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Running() {
    service.stop();
    thread.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client.Post(path, body.dump(), "application/json");
  }
  std::string create(const Raster<float>& rgb) {
    const auto r = post("/v1/sessions", {{"image", png_b64(rgb)}});
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body).at("session_id");
  }
  Mask mask(const std::string& id) {
    const auto r = client.Get("/v1/sessions/" + id + "/mask");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto& b = r->body;
    return png_to_mask(decode_png({reinterpret_cast<const uint8_t*>(b.data()), b.size()}));
  }
};

json stroke(std::vector<std::pair<int, int>> pts, int radius, const char* action) {
  json p = json::array();
  for (auto [x, y] : pts) p.push_back({x, y});
  return {{"points", p}, {"radius", radius}, {"action", action}};
}

// Strokes that cover a whole square image of side n.
json wipe(int n, const char* action) {
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < n; y += 8) {
    pts.emplace_back(0, y);
    pts.emplace_back(n - 1, y);
  }
  return stroke(pts, 8, action);
}

}  // namespace

TEST_CASE("base64 is strict") {
  const std::vector<uint8_t> bytes{0, 1, 2, 250, 251, 255, 7};
  CHECK(base64_decode(base64_encode(bytes)) == bytes);
  CHECK(base64_encode(std::vector<uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  CHECK(base64_decode("data:image/png;base64,Zm9v") == std::vector<uint8_t>{'f', 'o', 'o'});
  CHECK_THROWS_AS(base64_decode("Zm9vY"), FormatError);
  CHECK_THROWS_AS(base64_decode("Zm9v!A=="), FormatError);
  CHECK_THROWS_AS(base64_decode("Zm 9v"), FormatError);
}

TEST_CASE("service without models") {
  Running s(nullptr);
  const auto h = s.client.Get("/v1/health");
  REQUIRE(h);
  CHECK(json::parse(h->body).at("models_loaded") == false);
  const auto r = s.post("/v1/sessions", {{"image", png_b64(synth_scene(64, 1, 1).tile.rgb)}});
  REQUIRE(r);
  CHECK(r->status == 503);
  s.service.set_pipeline(tiny_pipeline());
  CHECK(s.post("/v1/sessions", {{"image", png_b64(synth_scene(64, 1, 1).tile.rgb)}})->status == 201);
}

TEST_CASE("session creation errors") {
  Running s(tiny_pipeline());
  const std::string good = png_b64(synth_scene(64, 1, 2).tile.rgb);
  CHECK(s.post("/v1/sessions", {{"image", good.substr(0, good.size() - 3)}})->status == 400);
  CHECK(s.post("/v1/sessions", {{"image", base64_encode(std::vector<uint8_t>{1, 2, 3})}})->status == 400);
  CHECK(s.post("/v1/sessions", {{"picture", good}})->status == 400);
  CHECK(s.client.Post("/v1/sessions", "{not json", "application/json")->status == 400);
  // Odd sizes do not survive the downsampling path.
  const auto odd = s.post("/v1/sessions", {{"image", png_b64(synth_scene(65, 1, 2).tile.rgb)}});
  CHECK(odd->status == 422);
  CHECK(json::parse(odd->body).contains("error"));
  CHECK(s.client.Get("/v1/sessions/0123456789abcdef")->status == 404);
  CHECK(s.client.Get("/v1/sessions/0123456789abcdef/mask")->status == 404);
  CHECK(s.post("/v1/sessions/0123456789abcdef/strokes", stroke({{1, 1}}, 3, "add"))->status == 404);
}

TEST_CASE("session resources agree with offline computation") {
  Running s(tiny_pipeline());
  const auto scene = synth_scene(64, 2, 4);
  const auto created = s.post("/v1/sessions", {{"image", png_b64(scene.tile.rgb)}});
  REQUIRE(created->status == 201);
  CHECK(created->get_header_value("X-Session-Version") == "1");
  CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
  const json summary = json::parse(created->body);
  const std::string id = summary.at("session_id");
  CHECK(id.size() == 16);
  CHECK(summary.at("width") == 64);
  CHECK(summary.at("strokes") == 0);

  const auto sp = s.client.Get("/v1/sessions/" + id + "/superpixels");
  REQUIRE(sp->status == 200);
  CHECK(sp->get_header_value("Content-Type") == "image/png");
  const auto png = decode_png({reinterpret_cast<const uint8_t*>(sp->body.data()), sp->body.size()});
  CHECK(png.bit_depth == 16);
  const auto ids = png_to_ids(png);
  LabelMap compact(ids.width, ids.height);
  for (size_t i = 0; i < ids.data.size(); ++i) compact.data[i] = ids.data[i];

  const json g = json::parse(s.client.Get("/v1/sessions/" + id + "/graph")->body);
  CHECK(g.at("nodes").size() == summary.at("n_superpixels").get<size_t>());
  CHECK(g.at("edges").size() == build_edges(compact).size());
  CHECK(g.at("labels").size() == g.at("nodes").size());

  const auto m = s.client.Get("/v1/sessions/" + id + "/mask");
  const auto mp = decode_png({reinterpret_cast<const uint8_t*>(m->body.data()), m->body.size()});
  CHECK(mp.channels == 1);
  for (uint16_t v : mp.samples) CHECK((v == 0 || v == 255));
  // The mask is the node labels painted through the superpixel map.
  const Mask mask = png_to_mask(mp);
  const auto labels = g.at("labels").get<std::vector<int>>();
  bool painted = true;
  for (size_t p = 0; p < mask.pixels(); ++p) painted &= mask.data[p] == labels[static_cast<size_t>(compact.data[p])];
  CHECK(painted);

  CHECK(s.client.Get("/v1/sessions/" + id + "/polygons?eps=abc")->status == 400);
  CHECK(s.client.Get("/v1/sessions/" + id + "/polygons?angle_tol=-2")->status == 400);
  CHECK(s.client.Get("/v1/sessions/" + id + "/polygons?eps=1.5")->status == 200);

  const auto opt = s.client.Options("/v1/sessions");
  CHECK(opt->status == 204);
  CHECK(opt->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  CHECK(s.client.Delete("/v1/sessions/" + id)->status == 204);
  CHECK(s.client.Get("/v1/sessions/" + id)->status == 404);
}

TEST_CASE("editing a session") {
  Running s(tiny_pipeline());
  const auto scene = synth_scene(64, 2, 11);
  const int n = 64;
  const std::string id = s.create(scene.tile.rgb);
  const std::string base = "/v1/sessions/" + id;

  CHECK(s.post(base + "/undo", json::object())->status == 409);
  CHECK(s.post(base + "/strokes", {{"points", json::array()}, {"radius", 3}, {"action", "add"}})->status == 400);
  CHECK(s.post(base + "/strokes", stroke({{1, 1}}, 0, "add"))->status == 400);
  CHECK(s.post(base + "/strokes", stroke({{1, 1}}, 3, "paint"))->status == 400);
  CHECK(s.client.Post(base + "/strokes", "[", "application/json")->status == 400);

  // Background everywhere: no polygons survive.
  auto r = s.post(base + "/strokes", wipe(n, "delete"));
  REQUIRE(r->status == 200);
  CHECK(r->get_header_value("X-Session-Version") == "2");
  Mask cleared = s.mask(id);
  CHECK(std::all_of(cleared.data.begin(), cleared.data.end(), [](uint8_t v) { return v == 0; }));
  const json empty = json::parse(s.client.Get(base + "/polygons")->body);
  CHECK(empty.at("type") == "FeatureCollection");
  CHECK(empty.at("features").empty());

  // Deleting again changes nothing.
  r = s.post(base + "/strokes", wipe(n, "delete"));
  CHECK(json::parse(r->body).at("changed_nodes").empty());
  CHECK(json::parse(r->body).at("version") == 3);

  // An add stroke through every building raises IoU above the cleared state.
  std::vector<std::pair<int, int>> inside;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (scene.tile.mask.at(x, y) && x % 4 == 0 && y % 4 == 0) inside.emplace_back(x, y);
  REQUIRE(!inside.empty());
  r = s.post(base + "/strokes", stroke(inside, 1, "add"));
  REQUIRE(r->status == 200);
  const json edit = json::parse(r->body);
  CHECK(!edit.at("changed_nodes").empty());
  CHECK(edit.at("mask_url").get<std::string>().find(base + "/mask") == 0);
  const double before = pixel_metrics(cleared, scene.tile.mask).iou;
  const Mask added = s.mask(id);
  CHECK(pixel_metrics(added, scene.tile.mask).iou > before);
  for (auto [x, y] : inside) CHECK(added.at(x, y) == 1);

  const json log = json::parse(s.client.Get(base + "/strokes")->body);
  CHECK(log.at("strokes").size() == 3);
  CHECK(log.at("strokes")[2] == stroke(inside, 1, "add"));

  // Undo replays the remaining log.
  r = s.post(base + "/undo", json::object());
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body).at("version") == 5);
  CHECK(s.mask(id) == cleared);

  // A fresh session fed the same strokes ends in the same state.
  const std::string twin = s.create(scene.tile.rgb);
  s.post("/v1/sessions/" + twin + "/strokes", wipe(n, "delete"));
  s.post("/v1/sessions/" + twin + "/strokes", wipe(n, "delete"));
  s.post("/v1/sessions/" + twin + "/strokes", stroke(inside, 1, "add"));
  s.post(base + "/strokes", stroke(inside, 1, "add"));
  CHECK(s.mask(twin) == s.mask(id));
  CHECK(json::parse(s.client.Get("/v1/sessions/" + twin + "/graph")->body).at("labels") ==
        json::parse(s.client.Get(base + "/graph")->body).at("labels"));

  // Strokes outside the image are reported, not fatal.
  r = s.post(base + "/strokes", stroke({{500, 500}}, 2, "add"));
  CHECK(r->status == 200);
  CHECK(!json::parse(r->body).at("warnings").empty());
}
