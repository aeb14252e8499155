#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctfs/common.hpp"

namespace ctfs {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Reads a grayscale PNG as raw sample values. 8-bit samples are returned as
/// stored (0..255); 16-bit as 0..65535. Palette images yield the palette
/// index itself, which is how class masks are stored.
inline Grid<uint16_t> read_png_gray(const std::string& path, int* bit_depth_out = nullptr) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open PNG for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng error while reading " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG is not grayscale or palette-indexed: " + path);
  }
  if (bit_depth < 8) png_set_packing(png);  // expand to one byte per sample
  if (bit_depth == 16) png_set_swap(png);   // stored big-endian
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);

  const size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  std::vector<uint8_t> raw(static_cast<size_t>(width) * height * bytes_per_sample);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r)
    rows[r] = raw.data() + static_cast<size_t>(r) * width * bytes_per_sample;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Grid<uint16_t> out(static_cast<int>(height), static_cast<int>(width));
  if (bytes_per_sample == 1) {
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = raw[i];
  } else {
    const uint16_t* p = reinterpret_cast<const uint16_t*>(raw.data());
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = p[i];
  }
  if (bit_depth_out) *bit_depth_out = bit_depth;
  return out;
}

namespace detail {

inline void write_png_impl(const std::string& path, const uint8_t* bytes, int rows, int cols,
                           int bit_depth) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng error while writing " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, cols, rows, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  std::vector<png_bytep> row_ptrs(rows);
  for (int r = 0; r < rows; ++r)
    row_ptrs[r] = const_cast<uint8_t*>(bytes) + static_cast<size_t>(r) * cols * bytes_per_sample;
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_png_gray8(const std::string& path, const Grid<uint8_t>& img) {
  detail::write_png_impl(path, img.data(), img.rows(), img.cols(), 8);
}

inline void write_png_gray16(const std::string& path, const Grid<uint16_t>& img) {
  detail::write_png_impl(path, reinterpret_cast<const uint8_t*>(img.data()), img.rows(),
                         img.cols(), 16);
}

}  // namespace ctfs
