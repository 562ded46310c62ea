#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "spgraph/dataset.hpp"
#include "spgraph/errors.hpp"
#include "spgraph/synth.hpp"

using namespace spgraph;

namespace {

// Winding number of a closed ring around (px, py).
int winding(const Ring& r, double px, double py) {
  int wn = 0;
  for (size_t i = 0; i < r.size(); ++i) {
    const Point& a = r[i];
    const Point& b = r[(i + 1) % r.size()];
    const double side = (b.x - a.x) * (py - a.y) - (px - a.x) * (b.y - a.y);
    if (a.y <= py) {
      if (b.y > py && side > 0) ++wn;
    } else if (b.y <= py && side < 0) {
      --wn;
    }
  }
  return wn;
}

long winding_area(const Ring& r, int size) {
  long n = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) n += winding(r, x + 0.5, y + 0.5) != 0 ? 1 : 0;
  return n;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("spgraph_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("empty scene") {
  const auto s = synth_scene(256, 0, 7);
  for (uint8_t v : s.tile.mask.data) CHECK(v == 0);
  for (uint8_t v : s.tile.boundary_building.data) CHECK(v == 0);
  CHECK(s.footprints.empty());
}

TEST_CASE("scene generation is deterministic") {
  const auto a = synth_scene(256, 3, 7);
  const auto b = synth_scene(256, 3, 7);
  CHECK(a.tile == b.tile);
  CHECK_FALSE(synth_scene(256, 3, 8).tile == a.tile);
}

TEST_CASE("mask area matches an independent winding-number count") {
  for (uint64_t seed : {7, 11, 23, 42}) {
    const auto s = synth_scene(256, 3, seed);
    REQUIRE(s.footprints.size() == 3);
    long generator = 0, oracle = 0, mask = 0;
    for (const auto& f : s.footprints) {
      generator += f.area_pixels;
      oracle += winding_area(f.ring, 256);
    }
    for (uint8_t v : s.tile.mask.data) mask += v;
    CHECK(mask == generator);
    CHECK(mask == oracle);
  }
}

TEST_CASE("small sizes are rejected") {
  CHECK_THROWS_AS(synth_scene(63, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(synth_scene(128, -1, 1), InvalidArgument);
}

TEST_CASE("tile invariants hold across seeds") {
  for (int i = 0; i < 20; ++i) {
    const auto tile = dataset_scene(256, 5, i).tile;
    for (size_t p = 0; p < tile.mask.pixels(); ++p) {
      CHECK((tile.instances.data[p] > 0) == (tile.mask.data[p] == 1));
      if (tile.boundary_building.data[p]) CHECK(tile.boundary_all.data[p] == 1);
    }
    for (float v : tile.rgb.data) CHECK((v >= 0.0f && v <= 1.0f));
    for (int y = 0; y < 256; ++y) {
      for (int x = 0; x < 256; ++x) {
        if (!tile.boundary_building.at(x, y)) continue;
        bool zero = tile.mask.at(x, y) == 0, one = tile.mask.at(x, y) == 1;
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          if (!tile.mask.contains(x + dx[k], y + dy[k])) continue;
          (tile.mask.at(x + dx[k], y + dy[k]) ? one : zero) = true;
        }
        CHECK((zero && one));
      }
    }
  }
}

TEST_CASE("distractors change rgb and object boundaries only") {
  SynthOptions plain;
  plain.distractors = false;
  const auto with = synth_scene(256, 4, 19);
  const auto without = synth_scene(256, 4, 19, plain);
  CHECK(with.tile.mask == without.tile.mask);
  CHECK(with.tile.instances == without.tile.instances);
  CHECK(with.tile.boundary_building == without.tile.boundary_building);
  CHECK_FALSE(with.tile.rgb == without.tile.rgb);
  CHECK_FALSE(with.tile.boundary_all == without.tile.boundary_all);
}

TEST_CASE("instances number buildings 1..n") {
  const auto s = synth_scene(256, 5, 3);
  std::vector<int> seen(6, 0);
  for (uint16_t v : s.tile.instances.data) {
    REQUIRE(v <= 5);
    seen[v] = 1;
  }
  for (int i = 1; i <= 5; ++i) CHECK(seen[static_cast<size_t>(i)] == 1);
}

TEST_CASE("one-hot encoding") {
  Mask m(2, 2, 1, 1);
  m.at(0, 0) = 0;
  const auto h = one_hot(m);
  CHECK(h.at(0, 0, 0) == 1.0f);
  CHECK(h.at(0, 0, 1) == 0.0f);
  CHECK(h.at(1, 1, 0) == 0.0f);
  CHECK(h.at(1, 1, 1) == 1.0f);
  const auto ones = one_hot(Mask(2, 2, 1, 1));
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK(ones.at(x, y, 1) == 1.0f);
}

TEST_CASE("tile save/load round trip") {
  const auto dir = scratch_dir("tiles");
  const auto tile = synth_scene(256, 3, 7).tile;
  const auto entry = save_tile(tile, dir, "t0");
  const auto png = read_png(entry.image);
  CHECK(png.width == 256);
  CHECK(png.height == 256);
  const auto back = load_tile(entry);
  CHECK(back.mask == tile.mask);
  CHECK(back.instances == tile.instances);
  double worst = 0;
  for (size_t i = 0; i < tile.rgb.data.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(back.rgb.data[i] - tile.rgb.data[i])));
  CHECK(worst <= 1.0 / 255.0);

  DatasetManifest m;
  m.seed = 9;
  m.tiles.push_back(entry);
  save_manifest(dir / "manifest.json", m);
  const auto loaded = load_manifest(dir / "manifest.json");
  CHECK(loaded.seed == 9);
  REQUIRE(loaded.tiles.size() == 1);
  CHECK(load_tile(loaded.tiles[0]).mask == tile.mask);

  std::filesystem::remove(entry.mask);
  CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), MissingFile);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed manifests and mismatched rasters") {
  const auto dir = scratch_dir("bad_manifest");
  std::ofstream(dir / "manifest.json") << "{ not json";
  CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.json"), MissingFile);

  auto a = save_tile(synth_scene(128, 1, 1).tile, dir, "a");
  auto b = save_tile(synth_scene(64, 1, 1).tile, dir, "b");
  a.mask = b.mask;
  CHECK_THROWS_AS(load_tile(a), FormatError);
  std::filesystem::remove_all(dir);
}
