#include "fmtk/data/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

namespace {

void check_rgb(const Tensor& image, const char* op) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DataError(fmt::format("{}: expected (H,W,3) image, got {}", op, shape_str(image.shape())));
  }
}

}  // namespace

FovCropBox fov_crop_box(const Tensor& image, double threshold) {
  check_rgb(image, "fov_crop");
  const int h = image.dim(0), w = image.dim(1);
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* px = image.data() + (static_cast<int64_t>(y) * w + x) * 3;
      const double mx = std::max({px[0], px[1], px[2]});
      if (mx > threshold) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  }
  if (y1 < 0) throw DataError("fov_crop: no FOV detected");
  FovCropBox box;
  box.y0 = y0;
  box.x0 = x0;
  box.ch = y1 - y0 + 1;
  box.cw = x1 - x0 + 1;
  box.side = std::max(box.ch, box.cw);
  box.pad_y = (box.side - box.ch) / 2;
  box.pad_x = (box.side - box.cw) / 2;
  return box;
}

Tensor fov_crop(const Tensor& image, double threshold) {
  const FovCropBox b = fov_crop_box(image, threshold);
  const int w = image.dim(1);
  Tensor out({b.side, b.side, 3});
  for (int y = 0; y < b.ch; ++y) {
    const double* src = image.data() + ((static_cast<int64_t>(b.y0 + y)) * w + b.x0) * 3;
    double* dst = out.data() + ((static_cast<int64_t>(b.pad_y + y)) * b.side + b.pad_x) * 3;
    std::copy(src, src + static_cast<int64_t>(b.cw) * 3, dst);
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  check_rgb(image, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw DataError("resize_bilinear: bad output size");
  const int h = image.dim(0), w = image.dim(1);
  if (h == out_h && w == out_w) return image;
  Tensor out({out_h, out_w, 3});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y_lo = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
    const int y_hi = std::min(y_lo + 1, h - 1);
    const double wy = std::clamp(fy - y_lo, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x_lo = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
      const int x_hi = std::min(x_lo + 1, w - 1);
      const double wx = std::clamp(fx - x_lo, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v00 = image.at({y_lo, x_lo, c});
        const double v01 = image.at({y_lo, x_hi, c});
        const double v10 = image.at({y_hi, x_lo, c});
        const double v11 = image.at({y_hi, x_hi, c});
        out.at({y, x, c}) = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, int size, double threshold) {
  return resize_bilinear(fov_crop(image, threshold), size, size);
}

double mean_abs_laplacian(const Tensor& image) {
  check_rgb(image, "mean_abs_laplacian");
  const int h = image.dim(0), w = image.dim(1);
  double total = 0.0;
  int64_t count = 0;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double lap = image.at({y - 1, x, c}) + image.at({y + 1, x, c}) +
                           image.at({y, x - 1, c}) + image.at({y, x + 1, c}) -
                           4.0 * image.at({y, x, c});
        total += std::abs(lap);
        ++count;
      }
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

double mean_value(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return t.numel() > 0 ? s / static_cast<double>(t.numel()) : 0.0;
}

void channel_stddev(const Tensor& image, double out[3]) {
  check_rgb(image, "channel_stddev");
  const int64_t n = image.numel() / 3;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += image[i * 3 + c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = image[i * 3 + c] - mean;
      var += d * d;
    }
    out[c] = std::sqrt(var / static_cast<double>(n));
  }
}

}  // namespace fmtk
