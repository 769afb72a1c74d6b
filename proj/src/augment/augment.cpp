#include "fmtk/augment/augment.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fmtk/common/error.hpp"

namespace fmtk {

const char* aug_kind_name(AugKind k) {
  switch (k) {
    case AugKind::Rotate: return "rotate";
    case AugKind::HFlip: return "hflip";
    case AugKind::VFlip: return "vflip";
    case AugKind::Brightness: return "brightness";
    case AugKind::Saturation: return "saturation";
    case AugKind::ChannelMix: return "channel-mix";
  }
  return "?";
}

nlohmann::ordered_json AugmentBounds::to_json() const {
  return {{"max_ops", max_ops},
          {"rotate_deg", rotate_deg},
          {"brightness", brightness},
          {"saturation_lo", saturation_lo},
          {"saturation_hi", saturation_hi},
          {"channel_mix", channel_mix}};
}

AugmentBounds AugmentBounds::from_json(const nlohmann::json& j) {
  AugmentBounds b;
  b.max_ops = j.value("max_ops", b.max_ops);
  b.rotate_deg = j.value("rotate_deg", b.rotate_deg);
  b.brightness = j.value("brightness", b.brightness);
  b.saturation_lo = j.value("saturation_lo", b.saturation_lo);
  b.saturation_hi = j.value("saturation_hi", b.saturation_hi);
  b.channel_mix = j.value("channel_mix", b.channel_mix);
  if (b.max_ops < 0 || b.max_ops > 7) throw DataError("augment bounds: max_ops outside [0,7]");
  return b;
}

AugmentPlan sample_plan(Rng& rng, const AugmentBounds& bounds) {
  AugmentPlan plan;
  const int count = static_cast<int>(rng.uniform_int(0, bounds.max_ops));
  for (int i = 0; i < count; ++i) {
    AugmentOp op;
    op.kind = static_cast<AugKind>(rng.uniform_int(0, kAugKindCount - 1));
    switch (op.kind) {
      case AugKind::Rotate: op.strength = rng.uniform(-bounds.rotate_deg, bounds.rotate_deg); break;
      case AugKind::HFlip:
      case AugKind::VFlip: op.strength = 0.0; break;
      case AugKind::Brightness: op.strength = rng.uniform(-bounds.brightness, bounds.brightness); break;
      case AugKind::Saturation: op.strength = rng.uniform(bounds.saturation_lo, bounds.saturation_hi); break;
      case AugKind::ChannelMix: op.strength = rng.uniform(0.0, bounds.channel_mix); break;
    }
    plan.ops.push_back(op);
  }
  return plan;
}

namespace {

Tensor rotate_bilinear(const Tensor& img, double degrees) {
  const int h = img.dim(0), w = img.dim(1);
  const double rad = degrees * 3.14159265358979324 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor out(img.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // inverse-rotate the target pixel into source coordinates
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        auto sample = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;  // exposed corners: black
          return img.at({yy, xx, ch});
        };
        out.at({y, x, ch}) = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                             fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
      }
    }
  }
  return out;
}

}  // namespace

Tensor apply_plan(const Tensor& image, const AugmentPlan& plan) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DataError(fmt::format("apply_plan: expected (H,W,3) image, got {}", shape_str(image.shape())));
  }
  if (plan.ops.size() > 7) throw DataError("apply_plan: plan longer than 7 transforms");
  if (plan.ops.empty()) return image;  // bitwise identity

  Tensor img = image;
  const int h = img.dim(0), w = img.dim(1);
  for (const AugmentOp& op : plan.ops) {
    switch (op.kind) {
      case AugKind::Rotate:
        img = rotate_bilinear(img, op.strength);
        break;
      case AugKind::HFlip: {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w / 2; ++x) {
            for (int c = 0; c < 3; ++c) std::swap(img.at({y, x, c}), img.at({y, w - 1 - x, c}));
          }
        }
        break;
      }
      case AugKind::VFlip: {
        for (int y = 0; y < h / 2; ++y) {
          for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) std::swap(img.at({y, x, c}), img.at({h - 1 - y, x, c}));
          }
        }
        break;
      }
      case AugKind::Brightness: {
        for (double& v : img.values()) v += op.strength;
        break;
      }
      case AugKind::Saturation: {
        for (int64_t p = 0; p < img.numel() / 3; ++p) {
          double* px = img.data() + p * 3;
          const double gray = (px[0] + px[1] + px[2]) / 3.0;
          for (int c = 0; c < 3; ++c) px[c] = gray + (px[c] - gray) * op.strength;
        }
        break;
      }
      case AugKind::ChannelMix: {
        const double f = op.strength;
        for (int64_t p = 0; p < img.numel() / 3; ++p) {
          double* px = img.data() + p * 3;
          const double r = px[0], g = px[1], b = px[2];
          px[0] = (1 - f) * r + f * g;
          px[1] = (1 - f) * g + f * b;
          px[2] = (1 - f) * b + f * r;
        }
        break;
      }
    }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace fmtk
