#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spgraph/synth.hpp"

namespace spgraph {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct TileEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::filesystem::path instances;
  Split split = Split::Train;
};

// manifest.json: {"tiles":[{"image","mask","instances","split"}], "seed"}.
// Paths are stored relative to the manifest's directory and resolved on load.
struct DatasetManifest {
  std::vector<TileEntry> tiles;
  uint64_t seed = 0;

  std::vector<TileEntry> select(Split split) const;
};

// Throws MissingFile (manifest or any referenced raster absent) or
// FormatError (malformed JSON, unknown split).
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Writes <stem>_image.png (8-bit RGB), <stem>_mask.png (8-bit), <stem>_instances.png (16-bit).
TileEntry save_tile(const ImageTile& tile, const std::filesystem::path& dir, const std::string& stem);
// Throws MissingFile / FormatError (including raster size mismatch).
ImageTile load_tile(const TileEntry& entry);

}  // namespace spgraph
