#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ross/grid.hpp"

namespace ross::io {

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  std::vector<std::uint8_t> pixels;  // interleaved
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_fn(png_structp, png_const_charp msg) { throw ParseError(std::string("png: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}
}  // namespace detail

inline RawImage read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw NotFound("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw ParseError(path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  RawImage img;
  try {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    img.pixels.resize(stride * img.height);
    std::vector<png_bytep> rows(img.height);
    for (int r = 0; r < img.height; ++r) rows[r] = img.pixels.data() + r * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::filesystem::path& path, const RawImage& img) {
  require(img.channels == 1 || img.channels == 3, "write_png: only gray or rgb output");
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorKind::Runtime, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int r = 0; r < img.height; ++r) png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Single-channel 8-bit map; pixel value v encodes v/255. Multi-channel files are rejected.
inline SaliencyMap read_map(const std::filesystem::path& path) {
  const auto img = read_png(path);
  if (img.channels != 1) throw InvalidArgument(path.string() + ": map files must be single-channel");
  SaliencyMap m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.pixels[i] / 255.0;
  return m;
}

inline void write_map(const std::filesystem::path& path, const SaliencyMap& map) {
  RawImage img{map.height(), map.width(), 1, {}};
  img.pixels.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) img.pixels[i] = to_byte(map[i]);
  write_png(path, img);
}

inline void write_mask(const std::filesystem::path& path, const BinaryMap& mask) {
  RawImage img{mask.height(), mask.width(), 1, {}};
  img.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] ? 255 : 0;
  write_png(path, img);
}

inline BinaryMap read_mask(const std::filesystem::path& path) {
  const auto m = read_map(path);
  BinaryMap b(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) b[i] = m[i] >= 0.5 ? 1 : 0;
  return b;
}

/// Decodes any PNG into a 3 x H x W block in [0,1]; gray is replicated, alpha dropped.
inline FeatureBlock read_rgb(const std::filesystem::path& path) {
  const auto img = read_png(path);
  FeatureBlock out(3, img.height, img.width);
  const int n = img.channels;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const std::uint8_t* px = img.pixels.data() + (static_cast<std::size_t>(r) * img.width + c) * n;
      for (int ch = 0; ch < 3; ++ch) out(ch, r, c) = (n >= 3 ? px[ch] : px[0]) / 255.0;
    }
  return out;
}

inline void write_rgb(const std::filesystem::path& path, const FeatureBlock& image) {
  require(image.channels == 3, "write_rgb: image must have 3 channels");
  RawImage img{image.height, image.width, 3, {}};
  img.pixels.resize(image.size());
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.pixels[(static_cast<std::size_t>(r) * image.width + c) * 3 + ch] = to_byte(image(ch, r, c));
  write_png(path, img);
}

}  // namespace ross::io
