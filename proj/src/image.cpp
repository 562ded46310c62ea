#include "spgraph/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>

#include "spgraph/errors.hpp"

namespace spgraph {

namespace {

struct ReadCursor {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes.size()) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, cur->bytes.data() + cur->pos, len);
  cur->pos += len;
}

void write_callback(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_callback(png_structp) {}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw InvalidArgument("unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

std::vector<uint8_t> encode_png(int width, int height, int channels, int bit_depth,
                                std::span<const uint16_t> samples) {
  if (width <= 0 || height <= 0) throw InvalidArgument("encode_png: empty image");
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("encode_png: bit depth must be 8 or 16");
  const size_t row_samples = static_cast<size_t>(width) * channels;
  if (samples.size() != row_samples * height) throw InvalidArgument("encode_png: sample count mismatch");

  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng: cannot allocate writer");
  }
  const size_t bytes_per_sample = bit_depth / 8;
  std::vector<uint8_t> row(row_samples * bytes_per_sample);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng: encode failed");
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type_for(channels), PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    const uint16_t* src = samples.data() + static_cast<size_t>(y) * row_samples;
    if (bit_depth == 8) {
      for (size_t i = 0; i < row_samples; ++i) row[i] = static_cast<uint8_t>(std::min<uint16_t>(src[i], 255));
    } else {
      // PNG stores 16-bit samples big-endian.
      for (size_t i = 0; i < row_samples; ++i) {
        row[2 * i] = static_cast<uint8_t>(src[i] >> 8);
        row[2 * i + 1] = static_cast<uint8_t>(src[i] & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngImage decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng: cannot allocate reader");
  }
  ReadCursor cursor{bytes, 0};
  PngImage img;
  std::vector<uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt or truncated PNG");
  }
  png_set_read_fn(png, &cursor, read_callback);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);
  const size_t row_samples = static_cast<size_t>(img.width) * img.channels;
  row.resize(row_bytes);
  img.samples.resize(row_samples * img.height);
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    uint16_t* dst = img.samples.data() + static_cast<size_t>(y) * row_samples;
    if (img.bit_depth == 16) {
      for (size_t i = 0; i < row_samples; ++i) dst[i] = static_cast<uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
    } else {
      for (size_t i = 0; i < row_samples; ++i) dst[i] = row[i];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
               std::span<const uint16_t> samples) {
  const auto bytes = encode_png(width, height, channels, bit_depth, samples);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PngImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("file not found: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_rgb_png(const std::filesystem::path& path, const Raster<float>& rgb) {
  std::vector<uint16_t> s(rgb.data.size());
  for (size_t i = 0; i < s.size(); ++i)
    s[i] = static_cast<uint16_t>(std::lround(std::clamp(rgb.data[i], 0.0f, 1.0f) * 255.0f));
  write_png(path, rgb.width, rgb.height, rgb.channels, 8, s);
}

std::vector<uint8_t> encode_mask_png(const Mask& mask) {
  std::vector<uint16_t> s(mask.data.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = mask.data[i] ? 255 : 0;
  return encode_png(mask.width, mask.height, 1, 8, s);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<uint16_t> s(mask.data.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = mask.data[i] ? 255 : 0;
  write_png(path, mask.width, mask.height, 1, 8, s);
}

void write_label_png(const std::filesystem::path& path, const Raster<uint16_t>& ids) {
  write_png(path, ids.width, ids.height, 1, 16, ids.data);
}

std::vector<uint8_t> encode_label_png(const LabelMap& labels) {
  std::vector<uint16_t> s(labels.data.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (labels.data[i] < 0 || labels.data[i] > 65535) throw InvalidArgument("label out of 16-bit range");
    s[i] = static_cast<uint16_t>(labels.data[i]);
  }
  return encode_png(labels.width, labels.height, 1, 16, s);
}

Raster<float> png_to_rgb(const PngImage& png) {
  if (png.channels < 3) throw FormatError("expected an RGB image");
  const float scale = png.bit_depth == 16 ? 65535.0f : 255.0f;
  Raster<float> rgb(png.width, png.height, 3);
  for (size_t p = 0; p < rgb.pixels(); ++p)
    for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = png.samples[p * png.channels + c] / scale;
  return rgb;
}

Mask png_to_mask(const PngImage& png) {
  const uint16_t half = png.bit_depth == 16 ? 32767 : 127;
  Mask m(png.width, png.height);
  for (size_t p = 0; p < m.pixels(); ++p) m.data[p] = png.samples[p * png.channels] > half ? 1 : 0;
  return m;
}

Raster<uint16_t> png_to_ids(const PngImage& png) {
  Raster<uint16_t> ids(png.width, png.height);
  for (size_t p = 0; p < ids.pixels(); ++p) ids.data[p] = png.samples[p * png.channels];
  return ids;
}

}  // namespace spgraph
