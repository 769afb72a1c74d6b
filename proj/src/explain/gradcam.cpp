#include "fmtk/explain/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

std::pair<int, int> Heatmap::argmax() const {
  int best = 0;
  for (int i = 1; i < h * w; ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return {best / w, best % w};
}

double Heatmap::max_value() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

std::string Heatmap::to_csv() const {
  std::ostringstream ss;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x) ss << ",";
      ss << fmt::format("{:.17g}", at(y, x));
    }
    ss << "\n";
  }
  return ss.str();
}

Heatmap gradcam(Model& model, const Tensor& image, GradCamTask task, int index, bool normalize) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DataError(fmt::format("gradcam: expected (H,W,3) image, got {}", shape_str(image.shape())));
  }
  const int logits_node = task == GradCamTask::OverallClass ? model.logits_b_node() : model.logits_a_node();
  if (task == GradCamTask::OverallClass && !model.has_head_b()) throw DataError("gradcam: model has no overall-quality head");
  if (task == GradCamTask::Detail && !model.has_head_a()) throw DataError("gradcam: model has no detail head");
  const int out_dim = task == GradCamTask::OverallClass ? model.config().num_classes : 3;
  if (index < 0 || index >= out_dim) {
    throw DataError(fmt::format("gradcam: target index {} outside [0,{})", index, out_dim));
  }

  Tensor batch({1, image.dim(0), image.dim(1), 3}, image.values());
  model.forward(batch);

  Graph& g = model.graph();
  Tensor seed({1, out_dim});
  seed.at({0, index}) = 1.0;
  g.backward_multi({{logits_node, &seed}});

  const Tensor& features = g.node_output(model.feature_node());  // (1,H,W,C)
  const std::vector<double>& grads = g.node_grad(model.feature_node());
  const int fh = features.dim(1), fw = features.dim(2), fc = features.dim(3);

  // channel weights: spatial mean of the target gradient
  std::vector<double> weights(static_cast<std::size_t>(fc), 0.0);
  for (int p = 0; p < fh * fw; ++p) {
    for (int c = 0; c < fc; ++c) weights[static_cast<std::size_t>(c)] += grads[static_cast<std::size_t>(p * fc + c)];
  }
  for (double& w : weights) w /= static_cast<double>(fh * fw);

  Heatmap map;
  map.h = fh;
  map.w = fw;
  map.normalized = normalize;
  map.target = task == GradCamTask::OverallClass ? fmt::format("overall:{}", index) : fmt::format("detail:{}", index);
  map.values.assign(static_cast<std::size_t>(fh) * fw, 0.0);
  for (int p = 0; p < fh * fw; ++p) {
    double v = 0.0;
    for (int c = 0; c < fc; ++c) v += weights[static_cast<std::size_t>(c)] * features[p * fc + c];
    map.values[static_cast<std::size_t>(p)] = std::max(0.0, v);
  }
  if (normalize) {
    const double mx = map.max_value();
    if (mx > 0.0) {
      for (double& v : map.values) v /= mx;
    }
  }
  return map;
}

Tensor overlay(const Tensor& image, const Heatmap& map, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError(fmt::format("overlay: alpha {} outside [0,1]", alpha));
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DataError(fmt::format("overlay: expected (H,W,3) image, got {}", shape_str(image.shape())));
  }
  const int h = image.dim(0), w = image.dim(1);
  Tensor out = image;
  if (alpha == 0.0) return out;
  const double sy = static_cast<double>(map.h) / h;
  const double sx = static_cast<double>(map.w) / w;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, map.h - 1);
    const int y1 = std::min(y0 + 1, map.h - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, map.w - 1);
      const int x1 = std::min(x0 + 1, map.w - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      const double v = (1 - wy) * ((1 - wx) * map.at(y0, x0) + wx * map.at(y0, x1)) +
                       wy * ((1 - wx) * map.at(y1, x0) + wx * map.at(y1, x1));
      // blue (cold) to red (hot)
      const double cr = v, cg = 0.1 * (1.0 - std::abs(2.0 * v - 1.0)), cb = 1.0 - v;
      double* px = out.data() + (static_cast<int64_t>(y) * w + x) * 3;
      px[0] = std::clamp((1 - alpha) * px[0] + alpha * cr, 0.0, 1.0);
      px[1] = std::clamp((1 - alpha) * px[1] + alpha * cg, 0.0, 1.0);
      px[2] = std::clamp((1 - alpha) * px[2] + alpha * cb, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace fmtk
