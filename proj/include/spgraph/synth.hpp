#pragma once

#include <cstdint>
#include <vector>

#include "spgraph/geometry.hpp"
#include "spgraph/image.hpp"

namespace spgraph {

// Training/evaluation unit: RGB raster plus building labels.
struct ImageTile {
  int width = 0;
  int height = 0;
  Raster<float> rgb;             // 3 channels, values in [0,1]
  Mask mask;                     // 1 = building
  Raster<uint16_t> instances;    // 0 = background, buildings 1..n
  Mask boundary_building;        // pixels with a 4-neighbour of different mask value
  Mask boundary_all;             // same, over buildings and distractor objects

  bool operator==(const ImageTile&) const = default;
};

struct Footprint {
  int id = 0;
  Ring ring;
  double rotation_deg = 0.0;
  bool l_shaped = false;
  long area_pixels = 0;  // pixel count recorded by the generator
};

struct SynthScene {
  ImageTile tile;
  std::vector<Footprint> footprints;
};

struct SynthOptions {
  bool distractors = true;
  int min_building = 16;
  int max_building = 96;
  int separation = 4;
};

inline constexpr int kMinSynthSize = 64;

// Deterministic for fixed (size, n_buildings, seed, options). Throws
// InvalidArgument for size < 64 or n_buildings < 0, and std::runtime_error if
// the requested buildings cannot be placed without overlap.
SynthScene synth_scene(int size, int n_buildings, uint64_t seed, const SynthOptions& options = {});

// Scene i of a dataset uses seed (seed, i) and 3..8 buildings.
inline constexpr int kDatasetMinBuildings = 3;
inline constexpr int kDatasetMaxBuildings = 8;
SynthScene dataset_scene(int size, uint64_t seed, int index, const SynthOptions& options = {});

// H x W x 2: channel 0 = 1 - mask, channel 1 = mask.
Raster<float> one_hot(const Mask& mask);

// Pixels with at least one 4-neighbour carrying a different label.
template <typename L>
Mask label_boundaries(const Raster<L>& labels) {
  Mask out(labels.width, labels.height);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const L v = labels.at(x, y);
      if ((x > 0 && labels.at(x - 1, y) != v) || (x + 1 < labels.width && labels.at(x + 1, y) != v) ||
          (y > 0 && labels.at(x, y - 1) != v) || (y + 1 < labels.height && labels.at(x, y + 1) != v)) {
        out.at(x, y) = 1;
      }
    }
  }
  return out;
}

// Builds a tile from rasters, deriving both boundary sets from the mask.
ImageTile make_tile(Raster<float> rgb, Mask mask, Raster<uint16_t> instances);

}  // namespace spgraph
