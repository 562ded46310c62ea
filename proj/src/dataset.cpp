#include "spgraph/dataset.hpp"

#include <fstream>

#include "json.hpp"
#include "spgraph/errors.hpp"

namespace spgraph {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split '" + s + "'");
}

std::vector<TileEntry> DatasetManifest::select(Split split) const {
  std::vector<TileEntry> out;
  for (const auto& t : tiles)
    if (t.split == split) out.push_back(t);
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("manifest not found: " + path.string());
  DatasetManifest m;
  const fs::path root = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    m.seed = j.value("seed", uint64_t{0});
    for (const auto& t : j.at("tiles")) {
      TileEntry e;
      e.image = root / t.at("image").get<std::string>();
      e.mask = root / t.at("mask").get<std::string>();
      e.instances = root / t.at("instances").get<std::string>();
      e.split = parse_split(t.value("split", std::string("train")));
      m.tiles.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  for (const auto& t : m.tiles) {
    for (const fs::path& p : {t.image, t.mask, t.instances}) {
      if (!fs::exists(p)) throw MissingFile("manifest " + path.string() + " references missing file " + p.string());
    }
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path root = path.parent_path();
  nlohmann::json j;
  j["seed"] = manifest.seed;
  j["tiles"] = nlohmann::json::array();
  for (const auto& t : manifest.tiles) {
    j["tiles"].push_back({{"image", fs::relative(t.image, root).generic_string()},
                          {"mask", fs::relative(t.mask, root).generic_string()},
                          {"instances", fs::relative(t.instances, root).generic_string()},
                          {"split", to_string(t.split)}});
  }
  if (!root.empty()) fs::create_directories(root);
  std::ofstream out(path);
  if (!out) throw MissingFile("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

TileEntry save_tile(const ImageTile& tile, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  TileEntry e;
  e.image = dir / (stem + "_image.png");
  e.mask = dir / (stem + "_mask.png");
  e.instances = dir / (stem + "_instances.png");
  write_rgb_png(e.image, tile.rgb);
  write_mask_png(e.mask, tile.mask);
  write_label_png(e.instances, tile.instances);
  return e;
}

ImageTile load_tile(const TileEntry& entry) {
  Raster<float> rgb = png_to_rgb(read_png(entry.image));
  Mask mask = png_to_mask(read_png(entry.mask));
  Raster<uint16_t> ids = png_to_ids(read_png(entry.instances));
  return make_tile(std::move(rgb), std::move(mask), std::move(ids));
}

}  // namespace spgraph
