#include <doctest.h>

#include <array>
#include <cmath>

#include "fmtk/augment/augment.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/phantom/phantom.hpp"

using namespace fmtk;

TEST_CASE("sample_plan: bounds, determinism, uniform kinds") {
  AugmentBounds bounds;
  SUBCASE("10k samples never exceed 7 ops and strengths stay in range") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
      const AugmentPlan plan = sample_plan(rng, bounds);
      CHECK(plan.ops.size() <= 7);
      for (const auto& op : plan.ops) {
        switch (op.kind) {
          case AugKind::Rotate:
            CHECK(op.strength >= -15.0);
            CHECK(op.strength <= 15.0);
            break;
          case AugKind::Brightness:
            CHECK(op.strength >= -0.1);
            CHECK(op.strength <= 0.1);
            break;
          case AugKind::Saturation:
            CHECK(op.strength >= 0.9);
            CHECK(op.strength <= 1.1);
            break;
          case AugKind::ChannelMix:
            CHECK(op.strength >= 0.0);
            CHECK(op.strength <= 0.05);
            break;
          default:
            CHECK(op.strength == 0.0);
        }
      }
    }
  }
  SUBCASE("fixed seed repeats the plan") {
    Rng a(42), b(42);
    const AugmentPlan p1 = sample_plan(a, bounds);
    const AugmentPlan p2 = sample_plan(b, bounds);
    REQUIRE(p1.ops.size() == p2.ops.size());
    for (std::size_t i = 0; i < p1.ops.size(); ++i) {
      CHECK(p1.ops[i].kind == p2.ops[i].kind);
      CHECK(p1.ops[i].strength == p2.ops[i].strength);
    }
  }
  SUBCASE("kind frequencies uniform within 3 sigma over 10k draws") {
    Rng rng(9);
    std::array<int64_t, kAugKindCount> counts{};
    int64_t total = 0;
    for (int i = 0; i < 10000; ++i) {
      for (const auto& op : sample_plan(rng, bounds).ops) {
        ++counts[static_cast<std::size_t>(op.kind)];
        ++total;
      }
    }
    const double expected = static_cast<double>(total) / kAugKindCount;
    const double sigma = std::sqrt(expected * (1.0 - 1.0 / kAugKindCount));
    for (int64_t c : counts) {
      CHECK(std::abs(static_cast<double>(c) - expected) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("apply_plan") {
  const Tensor img = generate_clean(PhantomSpec::randomized(32, 77));

  SUBCASE("empty plan is a bitwise identity") {
    const Tensor out = apply_plan(img, {});
    CHECK(out.values() == img.values());
  }
  SUBCASE("double flips restore the original") {
    AugmentPlan hh{{{AugKind::HFlip, 0}, {AugKind::HFlip, 0}}};
    CHECK(apply_plan(img, hh).values() == img.values());
    AugmentPlan vv{{{AugKind::VFlip, 0}, {AugKind::VFlip, 0}}};
    CHECK(apply_plan(img, vv).values() == img.values());
  }
  SUBCASE("brightness clamps at 1") {
    const Tensor bright = Tensor::full({4, 4, 3}, 0.95);
    AugmentPlan plan{{{AugKind::Brightness, 0.1}}};
    const Tensor out = apply_plan(bright, plan);
    for (double v : out.values()) CHECK(v == 1.0);
  }
  SUBCASE("values stay in [0,1] and shape is preserved under random plans") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const Tensor out = apply_plan(img, sample_plan(rng));
      REQUIRE(out.shape() == img.shape());
      for (double v : out.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("color perturbations alone move pixels by <= 0.15 on average") {
    auto mean_abs_change = [&](AugmentPlan plan) {
      const Tensor out = apply_plan(img, plan);
      double s = 0.0;
      for (int64_t i = 0; i < img.numel(); ++i) s += std::abs(out[i] - img[i]);
      return s / static_cast<double>(img.numel());
    };
    CHECK(mean_abs_change({{{AugKind::Brightness, 0.1}}}) <= 0.15);
    CHECK(mean_abs_change({{{AugKind::Brightness, -0.1}}}) <= 0.15);
    CHECK(mean_abs_change({{{AugKind::Saturation, 0.9}}}) <= 0.15);
    CHECK(mean_abs_change({{{AugKind::Saturation, 1.1}}}) <= 0.15);
    CHECK(mean_abs_change({{{AugKind::ChannelMix, 0.05}}}) <= 0.15);
  }
  SUBCASE("rotate there and back recovers the FOV interior") {
    const int size = 64;
    const Tensor big = generate_clean(PhantomSpec::randomized(size, 78));
    AugmentPlan plan{{{AugKind::Rotate, 12.5}, {AugKind::Rotate, -12.5}}};
    const Tensor out = apply_plan(big, plan);
    // compare inside a central disk well clear of the rim
    const double c = (size - 1) / 2.0;
    double err = 0.0;
    int64_t n = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (std::hypot(x - c, y - c) <= 0.65 * (size / 2.0 - 1.0)) {
          for (int ch = 0; ch < 3; ++ch) {
            err += std::abs(out.at({y, x, ch}) - big.at({y, x, ch}));
            n += 1;
          }
        }
      }
    }
    CHECK(err / static_cast<double>(n) <= 0.02);
  }
}
