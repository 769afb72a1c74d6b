#pragma once

#include <string>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Images are (H, W, 3) tensors with values in [0, 1]; masks are (H, W).
// Files are 8-bit PNG; writing quantizes with round(v * 255).

void write_png_rgb8(const std::string& path, const Tensor& image);
void write_png_gray8(const std::string& path, const Tensor& mask);

// Reads any libpng-decodable file, normalizing to 8-bit RGB.
Tensor read_png_rgb8(const std::string& path);
Tensor read_png_gray8(const std::string& path);

}  // namespace fmtk
