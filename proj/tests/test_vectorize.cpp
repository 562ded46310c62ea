#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "spgraph/errors.hpp"
#include "spgraph/geometry.hpp"
#include "spgraph/metrics.hpp"
#include "spgraph/vectorize.hpp"

using namespace spgraph;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

bool same_cycle(const Ring& a, const Ring& b) {
  if (a.size() != b.size()) return false;
  for (size_t s = 0; s < a.size(); ++s) {
    bool ok = true;
    for (size_t i = 0; i < a.size() && ok; ++i) ok = a[(i + s) % a.size()] == b[i];
    if (ok) return true;
  }
  return false;
}

// Interior corner angles in degrees.
std::vector<double> corner_angles(const Ring& r) {
  std::vector<double> out;
  const size_t n = r.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& p = r[(i + n - 1) % n];
    const Point& c = r[i];
    const Point& q = r[(i + 1) % n];
    const double ax = p.x - c.x, ay = p.y - c.y, bx = q.x - c.x, by = q.y - c.y;
    out.push_back(std::acos(std::clamp((ax * bx + ay * by) / (std::hypot(ax, ay) * std::hypot(bx, by)), -1.0, 1.0)) / kDeg);
  }
  return out;
}

Ring rotated(const std::vector<Point>& pts, double deg, Point about) {
  Ring r;
  const double c = std::cos(deg * kDeg), s = std::sin(deg * kDeg);
  for (const auto& p : pts) {
    const double x = p.x - about.x, y = p.y - about.y;
    r.push_back({about.x + c * x - s * y, about.y + s * x + c * y});
  }
  return r;
}

// Union of random discs and boxes, with random pixel holes punched in.
Mask random_blobs(std::mt19937_64& rng, int size) {
  Mask m(size, size);
  std::uniform_int_distribution<int> pos(0, size - 1), rad(2, 10), count(1, 6);
  const int shapes = count(rng);
  for (int s = 0; s < shapes; ++s) {
    const int cx = pos(rng), cy = pos(rng), r = rad(rng);
    const bool disc = rng() & 1u;
    for (int y = std::max(0, cy - r); y <= std::min(size - 1, cy + r); ++y)
      for (int x = std::max(0, cx - r); x <= std::min(size - 1, cx + r); ++x)
        if (!disc || (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1;
  }
  std::bernoulli_distribution flip(0.04);
  for (auto& v : m.data)
    if (flip(rng)) v ^= 1u;
  return m;
}

Mask rerasterize(const std::vector<FootprintPolygon>& polys, int w, int h) {
  Mask out(w, h);
  for (const auto& p : polys) {
    const Mask part = rasterize_polygon(p.shape, w, h);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] |= part.data[i];
  }
  return out;
}

}  // namespace

TEST_CASE("trace a single pixel and a rectangle") {
  Mask m(8, 8);
  m.at(2, 3) = 1;
  const auto one = trace(m);
  REQUIRE(one.size() == 1);
  CHECK(same_cycle(one[0].shape.exterior, Ring{{2, 3}, {3, 3}, {3, 4}, {2, 4}}));
  CHECK(one[0].instance == 1);
  CHECK(one[0].stage == PolygonStage::Raw);

  Mask r(12, 12);
  for (int y = 3; y <= 10; ++y)
    for (int x = 2; x <= 6; ++x) r.at(x, y) = 1;
  const auto rect = trace(r);
  REQUIRE(rect.size() == 1);
  CHECK(rect[0].shape.exterior.size() == 4);
  CHECK(signed_area(rect[0].shape.exterior) == 40.0);
  CHECK(trace(Mask(5, 5)).empty());
}

TEST_CASE("trace finds holes and orients them negatively") {
  Mask m(7, 7);
  for (int y = 1; y <= 5; ++y)
    for (int x = 1; x <= 5; ++x) m.at(x, y) = 1;
  m.at(3, 3) = 0;
  const auto p = trace(m);
  REQUIRE(p.size() == 1);
  REQUIRE(p[0].shape.holes.size() == 1);
  CHECK(signed_area(p[0].shape.exterior) == 25.0);
  CHECK(signed_area(p[0].shape.holes[0]) == -1.0);
}

TEST_CASE("diagonal pixels are separate components") {
  Mask m(4, 4);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  const auto p = trace(m);
  REQUIRE(p.size() == 2);
  CHECK(p[0].instance == 1);
  CHECK(p[1].instance == 2);
}

TEST_CASE("tracing round trips 100 random masks exactly") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const Mask m = random_blobs(rng, 64);
    const auto polys = trace(m);
    INFO("mask " << t);
    CHECK(rerasterize(polys, 64, 64) == m);
    for (const auto& p : polys) {
      CHECK(signed_area(p.shape.exterior) > 0);
      for (const auto& h : p.shape.holes) CHECK(signed_area(h) < 0);
    }
  }
}

TEST_CASE("simplify examples") {
  const Ring bump{{0, 0}, {1, 0.01}, {2, 0}, {2, 2}, {0, 2}};
  CHECK(same_cycle(simplify(bump, 0.1), Ring{{0, 0}, {2, 0}, {2, 2}, {0, 2}}));
  const Ring stairs{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
  CHECK(same_cycle(simplify(stairs, 0.0), Ring{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}));
  CHECK_THROWS_AS(simplify(Ring{{0, 0}, {1, 1}}, 1.0), DegeneratePolygon);
  CHECK_THROWS_AS(simplify(Ring{{0, 0}, {1, 0}, {2, 0}}, 0.5), DegeneratePolygon);

  Mask r(20, 20);
  for (int y = 4; y < 15; ++y)
    for (int x = 3; x < 17; ++x) r.at(x, y) = 1;
  CHECK(simplify(trace(r)[0].shape.exterior, 1.0).size() == 4);
}

TEST_CASE("simplify stays within epsilon and keeps original vertices") {
  std::mt19937_64 rng(7);
  int rings = 0;
  while (rings < 100) {
    for (const auto& p : trace(random_blobs(rng, 64))) {
      const Ring& raw = p.shape.exterior;
      if (raw.size() < 8) continue;
      for (double eps : {0.5, 1.5, 3.0}) {
        Ring s;
        try {
          s = simplify(raw, eps);
        } catch (const DegeneratePolygon&) {
          continue;
        }
        CHECK(s.size() <= raw.size());
        for (const auto& v : s) CHECK(std::find(raw.begin(), raw.end(), v) != raw.end());
        CHECK(hausdorff(raw, s) <= eps + 1e-9);
      }
      ++rings;
    }
  }
}

TEST_CASE("regularize squares up a rectangle rotated by one degree") {
  const Ring exact = rotated({{20, 30}, {80, 30}, {80, 70}, {20, 70}}, 1.0, {50, 50});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  for (int t = 0; t < 10; ++t) {
    FootprintPolygon p;
    p.shape.exterior = exact;
    for (auto& v : p.shape.exterior) {
      v.x += jitter(rng);
      v.y += jitter(rng);
    }
    p.stage = PolygonStage::Simplified;
    const auto r = regularize(p);
    CHECK(r.stage == PolygonStage::Regularized);
    REQUIRE(r.shape.exterior.size() == 4);
    for (double a : corner_angles(r.shape.exterior)) CHECK(std::abs(a - 90.0) <= 1e-6);
    CHECK(std::abs(dominant_direction(r.shape.exterior) - 1.0) < 0.5);
    CHECK(polygon_iou(r.shape, Polygon{exact, {}}) >= 0.98);
  }
}

TEST_CASE("regularize leaves an axis-aligned rectangle alone") {
  FootprintPolygon p;
  p.shape.exterior = {{2, 3}, {12, 3}, {12, 9}, {2, 9}};
  p.stage = PolygonStage::Simplified;
  const auto r = regularize(p);
  CHECK(same_cycle(r.shape.exterior, p.shape.exterior));
  const auto again = regularize(r);
  CHECK(same_cycle(again.shape.exterior, r.shape.exterior));
}

TEST_CASE("regularize makes every corner of a 30 degree L-shape square") {
  std::mt19937_64 rng(30);
  std::normal_distribution<double> jitter(0.0, 0.4);
  for (int t = 0; t < 10; ++t) {
    Ring l = rotated({{30, 30}, {90, 30}, {90, 55}, {55, 55}, {55, 90}, {30, 90}}, 30.0, {60, 60});
    for (auto& v : l) {
      v.x += jitter(rng);
      v.y += jitter(rng);
    }
    FootprintPolygon p;
    p.shape.exterior = l;
    p.stage = PolygonStage::Simplified;
    const auto r = regularize(p);
    CHECK(r.stage == PolygonStage::Regularized);
    REQUIRE(r.shape.exterior.size() == 6);
    for (double a : corner_angles(r.shape.exterior)) CHECK(std::abs(a - 90.0) <= 1e-6);
    CHECK_FALSE(self_intersects(r.shape.exterior));
  }
}

TEST_CASE("regularize keeps or drops vertices and respects the overlap floor") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    for (const auto& raw : trace(random_blobs(rng, 64))) {
      FootprintPolygon p = raw;
      try {
        p.shape.exterior = simplify(raw.shape.exterior, 1.5);
      } catch (const DegeneratePolygon&) {
        continue;
      }
      p.stage = PolygonStage::Simplified;
      const auto r = regularize(p);
      CHECK(r.shape.exterior.size() <= p.shape.exterior.size());
      if (r.stage == PolygonStage::Regularized) {
        CHECK(polygon_iou(r.shape, p.shape) >= 0.9);
        CHECK_FALSE(self_intersects(r.shape.exterior));
        CHECK(signed_area(r.shape.exterior) > 0);
      } else {
        CHECK(r.shape.exterior == p.shape.exterior);
      }
    }
  }
}

TEST_CASE("vectorizing an empty mask gives an empty collection") {
  const auto polys = vectorize_mask(Mask(32, 32));
  CHECK(polys.empty());
  const auto fc = to_geojson(polys);
  CHECK(fc.at("type") == "FeatureCollection");
  CHECK(fc.at("features").empty());
}

TEST_CASE("components below the minimum area are dropped") {
  Mask m(40, 40);
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 5; ++x) m.at(x, y) = 1;  // 9 px
  for (int y = 10; y < 30; ++y)
    for (int x = 10; x < 30; ++x) m.at(x, y) = 1;  // 400 px
  VectorizeOptions o;
  o.min_area = 0;
  CHECK(vectorize_mask(m, o).size() == 2);
  o.min_area = 9;
  CHECK(vectorize_mask(m, o).size() == 2);
  o.min_area = 10;
  const auto kept = vectorize_mask(m, o);
  REQUIRE(kept.size() == 1);
  CHECK(signed_area(kept[0].shape.exterior) == doctest::Approx(400));
  CHECK(vectorize_mask(m).size() == 1);
}

TEST_CASE("a rotated rectangular building becomes one four-vertex footprint") {
  const Ring exact = rotated({{60, 80}, {150, 80}, {150, 140}, {60, 140}}, 15.0, {105, 110});
  const Mask gt = rasterize_rings({exact}, 256, 256);
  const auto polys = vectorize_mask(gt);
  REQUIRE(polys.size() == 1);
  CHECK(polys[0].stage == PolygonStage::Regularized);
  CHECK(polys[0].shape.exterior.size() == 4);
  CHECK(mask_iou(rasterize_polygon(polys[0].shape, 256, 256), gt) >= 0.95);
}

TEST_CASE("geojson output is well formed and parses back") {
  Mask m(40, 40);
  for (int y = 5; y < 20; ++y)
    for (int x = 5; x < 30; ++x) m.at(x, y) = 1;
  m.at(12, 12) = 0;
  for (int y = 25; y < 35; ++y)
    for (int x = 25; x < 35; ++x) m.at(x, y) = 1;
  const auto polys = vectorize_mask(m);
  const auto fc = nlohmann::json::parse(to_geojson(polys).dump());
  CHECK(fc.at("type") == "FeatureCollection");
  REQUIRE(fc.at("features").size() == 2);
  for (const auto& f : fc.at("features")) {
    CHECK(f.at("type") == "Feature");
    CHECK(f.at("geometry").at("type") == "Polygon");
    for (const auto& ring : f.at("geometry").at("coordinates")) {
      CHECK(ring.size() >= 4);
      CHECK(ring.front() == ring.back());
      for (const auto& pos : ring) CHECK((pos.is_array() && pos.size() == 2 && pos[0].is_number()));
    }
    CHECK(f.at("properties").contains("instance"));
    CHECK(f.at("properties").contains("stage"));
  }
  const auto back = polygons_from_geojson(fc);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].exterior == polys[i].shape.exterior);
    CHECK(back[i].holes.size() == polys[i].shape.holes.size());
  }
  CHECK_THROWS_AS(polygons_from_geojson(nlohmann::json::parse(R"({"type":"Feature"})")), FormatError);
}
