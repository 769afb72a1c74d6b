#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmtk/common/rng.hpp"
#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

enum class AugKind { Rotate, HFlip, VFlip, Brightness, Saturation, ChannelMix };
constexpr int kAugKindCount = 6;
const char* aug_kind_name(AugKind k);

struct AugmentOp {
  AugKind kind;
  double strength = 0.0;  // unused for flips
};

// Up to 7 transforms, kinds drawn with replacement, strengths uniform in
// their intervals. Deliberately mild so labels keep their meaning.
struct AugmentBounds {
  int max_ops = 7;
  double rotate_deg = 15.0;       // rotation in [-rotate_deg, rotate_deg]
  double brightness = 0.1;        // additive shift in [-brightness, brightness]
  double saturation_lo = 0.9;     // multiplicative scale
  double saturation_hi = 1.1;
  double channel_mix = 0.05;      // blend factor in [0, channel_mix]

  nlohmann::ordered_json to_json() const;
  static AugmentBounds from_json(const nlohmann::json& j);
};

struct AugmentPlan {
  std::vector<AugmentOp> ops;
};

// Plan length uniform in {0..max_ops}; kinds uniform with replacement.
AugmentPlan sample_plan(Rng& rng, const AugmentBounds& bounds = {});

// Applies the plan in order. Rotation resamples bilinearly around the
// image center and fills exposed corners with black; every output value
// is clamped to [0,1]; the image shape never changes. Labels are not
// touched by design: the strength bounds keep every transform
// label-preserving.
Tensor apply_plan(const Tensor& image, const AugmentPlan& plan);

}  // namespace fmtk
