#pragma once

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Crops to the tight bounding box of pixels whose max channel exceeds
// `threshold`, then pads the shorter side symmetrically with black so the
// result is square. Aspect ratio of the retained content is preserved.
// Throws "no FOV detected" when no pixel clears the threshold.
Tensor fov_crop(const Tensor& image, double threshold = 0.02);

// The geometry fov_crop applies: content box in source coordinates plus
// its placement inside the padded square.
struct FovCropBox {
  int y0 = 0, x0 = 0;      // top-left of the content box in the source
  int ch = 0, cw = 0;      // content box size
  int side = 0;            // output square side, max(ch, cw)
  int pad_y = 0, pad_x = 0;
};
FovCropBox fov_crop_box(const Tensor& image, double threshold = 0.02);

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

// fov_crop followed by a bilinear resize to size x size: the standard
// preprocessing applied to every image entering the models.
Tensor preprocess(const Tensor& image, int size, double threshold = 0.02);

// Mean absolute 4-neighbour Laplacian over all channels; the
// high-frequency energy measure used to verify blurring.
double mean_abs_laplacian(const Tensor& image);

double mean_value(const Tensor& t);
// Per-channel standard deviation of an (H,W,3) image.
void channel_stddev(const Tensor& image, double out[3]);

}  // namespace fmtk
