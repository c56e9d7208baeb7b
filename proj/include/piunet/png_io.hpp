#pragma once

// Grayscale PNG read/write through libpng. Reading accepts 1..16-bit gray
// (with or without alpha, alpha dropped); values keep their stored range.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "piunet/image.hpp"

namespace piunet {

class ImageIoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  if (where) *where = msg;
  png_longjmp(png, 1);
}

inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

/// Returns stored sample values (0..255 for 8-bit files, 0..65535 for 16-bit).
inline Image<std::uint16_t> read_png_gray(const std::string& path, int* bit_depth_out = nullptr) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open image " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageIoError("not a PNG file: " + path);
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_fail, detail::png_warn);
  if (!png) throw ImageIoError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  Image<std::uint16_t> img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buf;
  int depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("corrupt PNG " + path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("expected a grayscale PNG: " + path);
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // little-endian host order
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image<std::uint16_t>(h, w);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x) {
      std::uint16_t v;
      if (depth == 16) std::memcpy(&v, rows[y] + 2 * x, 2);
      else v = rows[y][x];
      img.at(y, x) = v;
    }
  if (bit_depth_out) *bit_depth_out = depth < 8 ? 8 : depth;
  return img;
}

/// `bit_depth` 8 or 16; values above the depth's range are clamped.
inline void write_png_gray(const std::string& path, const Image<std::uint16_t>& img, int bit_depth = 16) {
  if (bit_depth != 8 && bit_depth != 16) throw ImageIoError("PNG bit depth must be 8 or 16");
  if (img.height < 1 || img.width < 1) throw ImageIoError("cannot write empty image " + path);
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot create image " + path);
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_fail, detail::png_warn);
  if (!png) throw ImageIoError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  const std::size_t bpp = bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.width) * bpp * static_cast<std::size_t>(img.height));
  for (std::int64_t y = 0; y < img.height; ++y)
    for (std::int64_t x = 0; x < img.width; ++x) {
      const std::uint16_t v = img.at(y, x);
      unsigned char* p = buf.data() + (static_cast<std::size_t>(y * img.width + x)) * bpp;
      if (bit_depth == 16) {
        p[0] = static_cast<unsigned char>(v >> 8);
        p[1] = static_cast<unsigned char>(v & 0xff);
      } else {
        p[0] = static_cast<unsigned char>(std::min<std::uint16_t>(v, 255));
      }
    }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (std::int64_t y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y * img.width) * bpp;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed writing PNG " + path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image<std::uint16_t> quantize16(const ImageF& img) {
  Image<std::uint16_t> out(img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::round(img.data[i]);
    out.data[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  return out;
}

}  // namespace piunet
