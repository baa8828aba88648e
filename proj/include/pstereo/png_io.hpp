#pragma once

#include <png.h>

#include <bit>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "pstereo/common.hpp"

namespace ps::io {

/// Decoded PNG in host byte order. 8-bit samples keep their 0..255 range;
/// nothing is rescaled and no gamma transform is applied.
struct PngImage {
  int h = 0, w = 0;
  int channels = 1;  // 1 = gray, 3 = rgb
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;  // row-major, interleaved

  std::uint16_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
};

namespace detail {

struct FileHandle {
  std::FILE* f = nullptr;
  FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {
    check(f != nullptr, Err::io_failure, "cannot open " + path);
  }
  ~FileHandle() {
    if (f) std::fclose(f);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace detail

/// Reads a gray or RGB PNG. Palette images expand to RGB, sub-byte gray
/// expands to 8 bits, and alpha channels are stripped.
inline PngImage read_png(const std::string& path) {
  detail::FileHandle file(path, "rb");
  PngImage out;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, Err::io_failure, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Err::io_failure, "png info allocation failed");
  }

  bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.f);
    png_read_info(png, info);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);

    out.h = static_cast<int>(h);
    out.w = static_cast<int>(w);
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);

    std::size_t rowbytes = png_get_rowbytes(png, info);
    raw.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  check(!failed, Err::io_failure, "failed to decode " + path);
  check(out.channels == 1 || out.channels == 3, Err::io_failure,
        "unsupported channel count in " + path);
  check(out.bit_depth == 8 || out.bit_depth == 16, Err::io_failure,
        "unsupported bit depth in " + path);

  std::size_t count = static_cast<std::size_t>(out.h) * out.w * out.channels;
  out.pixels.resize(count);
  if (out.bit_depth == 8) {
    for (std::size_t i = 0; i < count; ++i) out.pixels[i] = raw[i];
  } else {
    // Host order after png_set_swap above.
    const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(raw.data());
    for (std::size_t i = 0; i < count; ++i) out.pixels[i] = src[i];
  }
  return out;
}

namespace detail {

template <typename Sample>
inline void write_png_impl(const std::string& path, int h, int w, int channels,
                           const std::vector<Sample>& pixels, int bit_depth) {
  check(h > 0 && w > 0, Err::bad_params, "image dimensions must be positive");
  check(channels == 1 || channels == 3, Err::bad_params, "channel count must be 1 or 3");
  check(pixels.size() == static_cast<std::size_t>(h) * w * channels, Err::shape_mismatch,
        "pixel buffer does not match the image dimensions");

  FileHandle file(path, "wb");
  std::vector<png_bytep> rows(h);
  std::size_t rowbytes = static_cast<std::size_t>(w) * channels * sizeof(Sample);
  auto* base = reinterpret_cast<const std::uint8_t*>(pixels.data());
  for (int y = 0; y < h; ++y) rows[y] = const_cast<png_bytep>(base + y * rowbytes);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, Err::io_failure, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(Err::io_failure, "png info allocation failed");
  }

  bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.f);
    png_set_IHDR(png, info, w, h, bit_depth,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  check(!failed, Err::io_failure, "failed to encode " + path);
}

}  // namespace detail

inline void write_png8(const std::string& path, int h, int w, int channels,
                       const std::vector<std::uint8_t>& pixels) {
  detail::write_png_impl(path, h, w, channels, pixels, 8);
}

inline void write_png16(const std::string& path, int h, int w, int channels,
                        const std::vector<std::uint16_t>& pixels) {
  detail::write_png_impl(path, h, w, channels, pixels, 16);
}

}  // namespace ps::io
