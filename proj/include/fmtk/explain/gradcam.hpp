#pragma once

#include <string>

#include "fmtk/diffcore/tensor.hpp"
#include "fmtk/model/model.hpp"

namespace fmtk {

enum class GradCamTask { OverallClass, Detail };

struct Heatmap {
  int h = 0, w = 0;
  std::vector<double> values;  // non-negative
  bool normalized = true;      // max scaled to 1 (unless all-zero)
  std::string target;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y * w + x)]; }
  // argmax cell, first occurrence on ties
  std::pair<int, int> argmax() const;
  double max_value() const;
  std::string to_csv() const;
};

// Gradient-weighted class activation map from the final convolutional
// feature map (the last residual block output before global pooling).
// The target is the pre-softmax / pre-sigmoid logit of the chosen class
// or detail; channel weights are the spatial means of its gradient and
// the map is ReLU(sum_k w_k A_k), max-normalized unless `normalize` is
// false.
Heatmap gradcam(Model& model, const Tensor& image, GradCamTask task, int index, bool normalize = true);

// Bilinear-upsamples the map to the image size, passes it through a fixed
// blue-to-red colormap and alpha-blends it over the image.
Tensor overlay(const Tensor& image, const Heatmap& map, double alpha);

}  // namespace fmtk
