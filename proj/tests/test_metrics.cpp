#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "spgraph/errors.hpp"
#include "spgraph/metrics.hpp"
#include "spgraph/synth.hpp"

using namespace spgraph;

namespace {

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(x, y) = 1;
  return m;
}

Polygon rect(double x0, double y0, double x1, double y1) { return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}}; }

double brute_asa(const LabelMap& sp, const Raster<uint16_t>& gt) {
  std::map<int, std::map<int, long>> overlap;
  for (size_t p = 0; p < sp.pixels(); ++p) ++overlap[sp.data[p]][gt.data[p]];
  long hit = 0;
  for (const auto& [n, row] : overlap) {
    long best = 0;
    for (const auto& [g, c] : row) best = std::max(best, c);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(sp.pixels());
}

LabelMap random_labels(std::mt19937_64& rng, int w, int h, int k) {
  LabelMap m(w, h);
  for (auto& v : m.data) v = static_cast<int32_t>(rng() % static_cast<uint64_t>(k));
  return m;
}

}  // namespace

TEST_CASE("asa examples") {
  Raster<uint16_t> gt(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 2; x < 4; ++x) gt.at(x, y) = 1;
  LabelMap same(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) same.at(x, y) = x < 2 ? 7 : 3;
  CHECK(asa(same, gt) == 1.0);
  CHECK(asa(LabelMap(4, 2), gt) == 0.5);
}

TEST_CASE("asa matches exhaustive overlap counts and never drops under refinement") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 50; ++t) {
    const auto sp = random_labels(rng, 12, 10, 6);
    Raster<uint16_t> gt(12, 10);
    for (auto& v : gt.data) v = static_cast<uint16_t>(rng() % 4);
    const double a = asa(sp, gt);
    CHECK(a == doctest::Approx(brute_asa(sp, gt)).epsilon(1e-12));
    // Split one superpixel at random.
    auto finer = sp;
    const int target = static_cast<int>(rng() % 6);
    for (auto& v : finer.data)
      if (v == target && (rng() & 1u)) v = 100;
    CHECK(asa(finer, gt) >= a);
  }
}

TEST_CASE("boundary recall and precision") {
  const Mask sq = label_boundaries(rect_mask(40, 40, 10, 10, 30, 30));
  const auto same = br_bp(sq, sq, 1);
  CHECK(same.recall == 1.0);
  CHECK(same.precision == 1.0);

  const Mask shifted = label_boundaries(rect_mask(40, 40, 11, 10, 31, 30));
  CHECK(br_bp(shifted, sq, 2).recall == 1.0);

  const Mask all(40, 40, 1, 1);
  const auto sat = br_bp(all, sq, 1);
  long dil = 0;
  for (uint8_t v : dilate(sq, 1).data) dil += v;
  CHECK(sat.recall == 1.0);
  CHECK(sat.precision == doctest::Approx(static_cast<double>(dil) / 1600.0));
  CHECK_THROWS_AS(br_bp(sq, Mask(40, 40), 1), UndefinedMetric);
  CHECK(default_boundary_tolerance(256, 256) == 1);
  CHECK(default_boundary_tolerance(1024, 1024) == 4);
}

TEST_CASE("dilation is a Chebyshev ball") {
  Mask m(9, 9);
  m.at(4, 4) = 1;
  const auto d = dilate(m, 2);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) CHECK(d.at(x, y) == (std::max(std::abs(x - 4), std::abs(y - 4)) <= 2 ? 1 : 0));
}

TEST_CASE("pixel metrics") {
  const Mask gt = rect_mask(20, 10, 0, 0, 10, 10);
  const auto same = pixel_metrics(gt, gt);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);
  CHECK(same.iou == 1.0);
  Mask inv = gt;
  for (auto& v : inv.data) v ^= 1u;
  const auto opp = pixel_metrics(inv, gt);
  CHECK(opp.precision == 0.0);
  CHECK(opp.recall == 0.0);

  const Mask a = rect_mask(20, 20, 0, 0, 10, 10);
  const Mask b = rect_mask(20, 20, 5, 0, 15, 10);
  CHECK(pixel_metrics(a, b).iou == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(pixel_metrics(Mask(4, 4), Mask(4, 4)).iou == 1.0);
  CHECK(pixel_metrics(Mask(4, 4), rect_mask(4, 4, 0, 0, 2, 2)).precision == 0.0);
}

TEST_CASE("vector metrics examples") {
  const std::vector<Polygon> gt{rect(2, 2, 12, 12), rect(20, 20, 35, 30)};
  const auto same = vector_metrics(gt, gt, 40, 40);
  CHECK(same.ap50 == 100.0);
  CHECK(same.ap75 == 100.0);
  CHECK(same.wc == doctest::Approx(1.0));
  CHECK(same.hd == doctest::Approx(0.0));
  CHECK(same.vne == 0.0);
  CHECK(same.bf == doctest::Approx(1.0));

  const auto disjoint = vector_metrics({rect(30, 2, 38, 10)}, gt, 40, 40);
  CHECK(disjoint.ap50 == 0.0);

  const auto third = vector_metrics({rect(0, 0, 10, 10)}, {rect(5, 0, 15, 10)}, 20, 20);
  CHECK(third.ap50 == 0.0);
  CHECK(third.wc == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(vector_metrics(gt, {}, 40, 40), UndefinedMetric);
}

TEST_CASE("vector matching is one-to-one") {
  // Two predictions overlap the same gt; only one may match.
  const std::vector<Polygon> gt{rect(0, 0, 10, 10)};
  const auto m = vector_metrics({rect(0, 0, 10, 10), rect(0, 0, 10, 9)}, gt, 20, 20);
  CHECK(m.matched == 1);
  CHECK(m.ap50 == doctest::Approx(50.0));
}

TEST_CASE("bounded metrics stay in range on random instances") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 50);
  for (int t = 0; t < 200; ++t) {
    std::vector<Polygon> pred, gt;
    const int np = static_cast<int>(rng() % 4), ng = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < np + ng; ++i) {
      const double x = u(rng), y = u(rng);
      (i < np ? pred : gt).push_back(rect(x, y, x + 2 + u(rng) / 4, y + 2 + u(rng) / 4));
    }
    const auto v = vector_metrics(pred, gt, 64, 64);
    CHECK((v.ap50 >= 0 && v.ap50 <= 100));
    CHECK((v.ap75 >= 0 && v.ap75 <= v.ap50));
    CHECK((v.wc >= 0 && v.wc <= 1));
    CHECK((v.bf >= 0 && v.bf <= 1));
    CHECK(v.hd >= 0);
    CHECK(v.vne >= 0);
    CHECK(v.matched <= std::min(np, ng));

    const auto sp = random_labels(rng, 16, 16, 5);
    Raster<uint16_t> g(16, 16);
    for (auto& x : g.data) x = static_cast<uint16_t>(rng() % 3);
    const double a = asa(sp, g);
    CHECK((a >= 0 && a <= 1));
    Mask pm(16, 16), gm(16, 16);
    for (auto& x : pm.data) x = static_cast<uint8_t>(rng() & 1u);
    for (auto& x : gm.data) x = static_cast<uint8_t>(rng() & 1u);
    const auto px = pixel_metrics(pm, gm);
    for (double s : {px.precision, px.recall, px.f1, px.iou}) CHECK((s >= 0 && s <= 1));
  }
}

TEST_CASE("metric report json") {
  MetricReport r;
  r.add("ASA", 0.98, {{"tiles", 20}}, 20);
  CHECK(r.value("ASA") == 0.98);
  CHECK(r.json().at("ASA").at("params").at("tiles") == 20);
  CHECK(r.json().at("ASA").at("support") == 20);
}
