#include "spgraph/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "spgraph/errors.hpp"

namespace spgraph {

namespace {

std::mt19937_64 stream(uint64_t seed, uint32_t id) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), id, 0x5eedu};
  return std::mt19937_64(seq);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Local footprint outline centred on the origin, counter-clockwise on screen.
Ring footprint_outline(double w, double h, bool l_shaped, int notch_corner, double notch_fx, double notch_fy) {
  const double hx = w / 2, hy = h / 2;
  if (!l_shaped) return {{-hx, -hy}, {-hx, hy}, {hx, hy}, {hx, -hy}};
  const double nw = w * notch_fx, nh = h * notch_fy;
  // Notch removed from the (+x, -y) corner, then mirrored to the chosen corner.
  Ring r{{-hx, -hy}, {-hx, hy}, {hx, hy}, {hx, -hy + nh}, {hx - nw, -hy + nh}, {hx - nw, -hy}};
  const bool flip_x = notch_corner & 1, flip_y = notch_corner & 2;
  for (Point& p : r) p = {flip_x ? -p.x : p.x, flip_y ? -p.y : p.y};
  if (flip_x != flip_y) std::reverse(r.begin(), r.end());
  return r;
}

struct Palette {
  std::array<float, 3> rgb;
};

constexpr std::array<Palette, 5> kRoofs{{
    {{0.72f, 0.30f, 0.24f}},
    {{0.80f, 0.78f, 0.74f}},
    {{0.34f, 0.44f, 0.70f}},
    {{0.82f, 0.56f, 0.28f}},
    {{0.58f, 0.28f, 0.46f}},
}};

}  // namespace

ImageTile make_tile(Raster<float> rgb, Mask mask, Raster<uint16_t> instances) {
  if (rgb.width != mask.width || rgb.height != mask.height || instances.width != mask.width ||
      instances.height != mask.height) {
    throw FormatError("raster size mismatch within tile");
  }
  ImageTile t;
  t.width = mask.width;
  t.height = mask.height;
  t.rgb = std::move(rgb);
  t.boundary_building = label_boundaries(mask);
  t.boundary_all = t.boundary_building;
  t.mask = std::move(mask);
  t.instances = std::move(instances);
  return t;
}

SynthScene synth_scene(int size, int n_buildings, uint64_t seed, const SynthOptions& options) {
  if (size < kMinSynthSize) {
    throw InvalidArgument("synth_scene: size " + std::to_string(size) + " below minimum " + std::to_string(kMinSynthSize));
  }
  if (n_buildings < 0) throw InvalidArgument("synth_scene: negative building count");

  auto layout_rng = stream(seed, 1);
  auto road_rng = stream(seed, 2);
  auto paint_rng = stream(seed, 3);

  SynthScene scene;
  ImageTile& tile = scene.tile;
  tile.width = tile.height = size;
  tile.mask = Mask(size, size);
  tile.instances = Raster<uint16_t>(size, size);
  Mask blocked(size, size);

  const int margin = 2;
  const int max_side_cap = std::max(options.min_building, std::min(options.max_building, size / 3));
  for (int id = 1; id <= n_buildings; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < 600 && !placed; ++attempt) {
      // Shrink the size range as attempts fail so crowded tiles still fill.
      const int max_side = std::max(options.min_building, max_side_cap - (attempt / 100) * 12);
      const int w = uniform_int(layout_rng, options.min_building, max_side);
      const int h = uniform_int(layout_rng, options.min_building, max_side);
      const bool l_shaped = uniform(layout_rng, 0.0, 1.0) < 0.35;
      const int notch_corner = uniform_int(layout_rng, 0, 3);
      const double nfx = uniform(layout_rng, 0.35, 0.6), nfy = uniform(layout_rng, 0.35, 0.6);
      const int rot_deg = 15 * uniform_int(layout_rng, 0, 3);
      const double cx = uniform(layout_rng, margin, size - margin);
      const double cy = uniform(layout_rng, margin, size - margin);

      Ring local = footprint_outline(w, h, l_shaped, notch_corner, nfx, nfy);
      Ring ring;
      const double th = rot_deg * std::numbers::pi / 180.0;
      const double c = std::cos(th), s = std::sin(th);
      // Axis-aligned footprints snap to the integer lattice so their raster is exact.
      const double ox = rot_deg == 0 ? std::round(cx) + (w % 2 ? 0.5 : 0.0) : cx;
      const double oy = rot_deg == 0 ? std::round(cy) + (h % 2 ? 0.5 : 0.0) : cy;
      bool inside = true;
      for (const Point& p : local) {
        Point q{ox + c * p.x - s * p.y, oy + s * p.x + c * p.y};
        if (rot_deg == 0) q = {std::round(q.x), std::round(q.y)};
        inside = inside && q.x >= margin && q.y >= margin && q.x <= size - margin && q.y <= size - margin;
        ring.push_back(q);
      }
      if (!inside) continue;

      const Mask fp = rasterize_rings({ring}, size, size);
      long area = 0;
      bool clash = false;
      for (size_t i = 0; i < fp.data.size() && !clash; ++i) {
        if (!fp.data[i]) continue;
        ++area;
        clash = blocked.data[i] != 0;
      }
      if (clash || area == 0) continue;

      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          if (!fp.at(x, y)) continue;
          tile.mask.at(x, y) = 1;
          tile.instances.at(x, y) = static_cast<uint16_t>(id);
          for (int dy = -options.separation; dy <= options.separation; ++dy)
            for (int dx = -options.separation; dx <= options.separation; ++dx)
              if (blocked.contains(x + dx, y + dy)) blocked.at(x + dx, y + dy) = 1;
        }
      }
      scene.footprints.push_back({id, std::move(ring), static_cast<double>(rot_deg), l_shaped, area});
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synth_scene: could not place building " + std::to_string(id) + " of " +
                               std::to_string(n_buildings) + " on a " + std::to_string(size) + " px tile");
    }
  }

  // Object ids for the all-objects boundary: buildings 1..n, roads 1000+k.
  LabelMap objects(size, size);
  for (size_t i = 0; i < objects.data.size(); ++i) objects.data[i] = tile.instances.data[i];

  // Background: base colour with gentle low-frequency variation.
  std::array<float, 3> base{static_cast<float>(uniform(paint_rng, 0.30, 0.45)),
                            static_cast<float>(uniform(paint_rng, 0.42, 0.55)),
                            static_cast<float>(uniform(paint_rng, 0.26, 0.36))};
  const double fx = uniform(paint_rng, 0.01, 0.04), fy = uniform(paint_rng, 0.01, 0.04);
  const double phx = uniform(paint_rng, 0, 6.28), phy = uniform(paint_rng, 0, 6.28);
  std::vector<std::array<float, 3>> roof(static_cast<size_t>(n_buildings) + 1);
  for (int id = 1; id <= n_buildings; ++id) {
    const auto& pal = kRoofs[static_cast<size_t>(uniform_int(paint_rng, 0, static_cast<int>(kRoofs.size()) - 1))];
    for (int c = 0; c < 3; ++c) roof[static_cast<size_t>(id)][static_cast<size_t>(c)] = pal.rgb[static_cast<size_t>(c)] + static_cast<float>(uniform(paint_rng, -0.05, 0.05));
  }
  std::normal_distribution<float> noise(0.0f, 0.02f);

  tile.rgb = Raster<float>(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float shade = static_cast<float>(0.04 * std::sin(fx * x + phx) * std::cos(fy * y + phy));
      for (int c = 0; c < 3; ++c) tile.rgb.at(x, y, c) = base[static_cast<size_t>(c)] + shade;
    }
  }

  if (options.distractors) {
    const int roads = uniform_int(road_rng, 1, 3);
    for (int r = 0; r < roads; ++r) {
      const double angle = uniform(road_rng, 0.0, std::numbers::pi);
      const double width = uniform(road_rng, 4.0, 10.0);
      const double px = uniform(road_rng, 0.0, size), py = uniform(road_rng, 0.0, size);
      const float grey = static_cast<float>(uniform(road_rng, 0.18, 0.30));
      const double nx = -std::sin(angle), ny = std::cos(angle);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double d = std::abs((x + 0.5 - px) * nx + (y + 0.5 - py) * ny);
          if (d >= width / 2) continue;
          for (int c = 0; c < 3; ++c) tile.rgb.at(x, y, c) = grey;
          if (tile.instances.at(x, y) == 0) objects.at(x, y) = 1000 + r;
        }
      }
    }
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int id = tile.instances.at(x, y);
      for (int c = 0; c < 3; ++c) {
        float v = id ? roof[static_cast<size_t>(id)][static_cast<size_t>(c)] : tile.rgb.at(x, y, c);
        v += noise(paint_rng);
        tile.rgb.at(x, y, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }

  tile.boundary_building = label_boundaries(tile.mask);
  tile.boundary_all = label_boundaries(objects);
  return scene;
}

SynthScene dataset_scene(int size, uint64_t seed, int index, const SynthOptions& options) {
  auto rng = stream(seed, 100u + static_cast<uint32_t>(index));
  const int n = uniform_int(rng, kDatasetMinBuildings, kDatasetMaxBuildings);
  return synth_scene(size, n, rng(), options);
}

Raster<float> one_hot(const Mask& mask) {
  Raster<float> h(mask.width, mask.height, 2);
  for (size_t p = 0; p < mask.pixels(); ++p) {
    const float b = mask.data[p] ? 1.0f : 0.0f;
    h.data[2 * p] = 1.0f - b;
    h.data[2 * p + 1] = b;
  }
  return h;
}

}  // namespace spgraph
