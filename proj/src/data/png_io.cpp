#include "fmtk/data/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include <fmt/format.h>
#include <png.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"

namespace fmtk {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

void write_png(const std::string& path, int h, int w, int channels, const std::vector<uint8_t>& bytes) {
  ensure_parent_dir(path);
  const std::string tmp = path + ".tmp";
  FilePtr file(std::fopen(tmp.c_str(), "wb"));
  if (!file) throw DataError(fmt::format("cannot open '{}' for writing", tmp));

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("libpng failed writing '{}'", path));
  }
  png_init_io(png, file.get());
  // fixed settings keep output bytes reproducible across runs
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * w * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  file.reset();

  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError(fmt::format("rename '{}' -> '{}': {}", tmp, path, ec.message()));
}

std::vector<uint8_t> read_png(const std::string& path, int& h, int& w, int want_channels) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError(fmt::format("cannot open image '{}'", path));
  uint8_t header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError(fmt::format("'{}' is not a PNG file", path));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(fmt::format("libpng failed reading '{}'", path));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);       // palette -> rgb, gray<8 -> 8, tRNS -> alpha
  png_set_strip_alpha(png);
  if (want_channels == 3) {
    png_set_gray_to_rgb(png);
  } else {
    const png_byte ct = png_get_color_type(png, info);
    if (ct == PNG_COLOR_TYPE_RGB || ct == PNG_COLOR_TYPE_RGB_ALPHA || ct == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
  }
  png_read_update_info(png, info);

  h = static_cast<int>(png_get_image_height(png, info));
  w = static_cast<int>(png_get_image_width(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(fmt::format("'{}': expected {} channels after decode, got {}", path, want_channels, channels));
  }
  std::vector<uint8_t> bytes(static_cast<std::size_t>(h) * w * channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

}  // namespace

void write_png_rgb8(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DataError(fmt::format("write_png_rgb8: expected (H,W,3) image, got {}", shape_str(image.shape())));
  }
  std::vector<uint8_t> bytes(static_cast<std::size_t>(image.numel()));
  for (int64_t i = 0; i < image.numel(); ++i) bytes[static_cast<std::size_t>(i)] = quantize(image[i]);
  write_png(path, image.dim(0), image.dim(1), 3, bytes);
}

void write_png_gray8(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) {
    throw DataError(fmt::format("write_png_gray8: expected (H,W) mask, got {}", shape_str(mask.shape())));
  }
  std::vector<uint8_t> bytes(static_cast<std::size_t>(mask.numel()));
  for (int64_t i = 0; i < mask.numel(); ++i) bytes[static_cast<std::size_t>(i)] = quantize(mask[i]);
  write_png(path, mask.dim(0), mask.dim(1), 1, bytes);
}

Tensor read_png_rgb8(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png(path, h, w, 3);
  Tensor img({h, w, 3});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = bytes[static_cast<std::size_t>(i)] / 255.0;
  return img;
}

Tensor read_png_gray8(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png(path, h, w, 1);
  Tensor mask({h, w});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = bytes[static_cast<std::size_t>(i)] / 255.0;
  return mask;
}

}  // namespace fmtk
