#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spgraph {

// Row-major interleaved raster, `channels` samples per pixel.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  T& at(int x, int y, int c = 0) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
  bool operator==(const Raster&) const = default;
};

using Mask = Raster<uint8_t>;      // 0/1
using LabelMap = Raster<int32_t>;  // region ids

// Decoded PNG samples widened to 16 bits; bit_depth is 8 or 16.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<uint16_t> samples;
};

std::vector<uint8_t> encode_png(int width, int height, int channels, int bit_depth,
                                std::span<const uint16_t> samples);
PngImage decode_png(std::span<const uint8_t> bytes);

void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
               std::span<const uint16_t> samples);
PngImage read_png(const std::filesystem::path& path);

// Convenience wrappers for the raster kinds we store.
void write_rgb_png(const std::filesystem::path& path, const Raster<float>& rgb);  // [0,1] -> 8 bit
void write_mask_png(const std::filesystem::path& path, const Mask& mask);        // 0/255, 8 bit
void write_label_png(const std::filesystem::path& path, const Raster<uint16_t>& ids);  // 16 bit
std::vector<uint8_t> encode_mask_png(const Mask& mask);
std::vector<uint8_t> encode_label_png(const LabelMap& labels);

Raster<float> png_to_rgb(const PngImage& png);
Mask png_to_mask(const PngImage& png);  // any sample > half-scale is foreground
Raster<uint16_t> png_to_ids(const PngImage& png);

}  // namespace spgraph
