#include <doctest.h>

#include <cmath>

#include "fmtk/common/error.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/explain/gradcam.hpp"
#include "fmtk/phantom/phantom.hpp"

using namespace fmtk;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.input_size = 16;
  cfg.widths = {4, 8};
  cfg.blocks_per_stage = 1;
  cfg.embed_dim = 8;
  cfg.num_classes = 3;
  return cfg;
}

Tensor random_image(int size, uint64_t seed) {
  Rng rng(seed);
  Tensor t({size, size, 3});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("gradcam basics on a live model") {
  Model m = Model::single_task(tiny_config(), 3);
  m.attach_head_a(4);
  const Tensor img = random_image(16, 5);

  SUBCASE("map size equals the final conv feature map") {
    const Heatmap map = gradcam(m, img, GradCamTask::OverallClass, 0);
    CHECK(map.h == 8);  // 16 -> pool once -> 8
    CHECK(map.w == 8);
    for (double v : map.values) CHECK(v >= 0.0);
  }
  SUBCASE("normalized map peaks at exactly 1 unless all-zero") {
    const Heatmap map = gradcam(m, img, GradCamTask::OverallClass, 1);
    const double mx = map.max_value();
    CHECK((mx == 1.0 || mx == 0.0));
  }
  SUBCASE("raw and normalized maps share their argmax") {
    const Heatmap raw = gradcam(m, img, GradCamTask::Detail, 2, false);
    const Heatmap norm = gradcam(m, img, GradCamTask::Detail, 2, true);
    if (raw.max_value() > 0.0) CHECK(raw.argmax() == norm.argmax());
  }
  SUBCASE("scale invariance of the normalized map") {
    // scaling the head weights scales the upstream gradient; the
    // normalized map must not move
    const Heatmap before = gradcam(m, img, GradCamTask::OverallClass, 0, true);
    for (auto& [name, t] : m.trainable()) {
      if (name.rfind("head_b", 0) == 0) {
        for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] *= 3.5;
      }
    }
    const Heatmap after = gradcam(m, img, GradCamTask::OverallClass, 0, true);
    REQUIRE(before.values.size() == after.values.size());
    for (std::size_t i = 0; i < before.values.size(); ++i) {
      CHECK(after.values[i] == doctest::Approx(before.values[i]).epsilon(1e-9));
    }
  }
  SUBCASE("target index out of range") {
    CHECK_THROWS_AS(gradcam(m, img, GradCamTask::OverallClass, 3), DataError);
    CHECK_THROWS_AS(gradcam(m, img, GradCamTask::Detail, -1), DataError);
  }
  SUBCASE("missing head rejected") {
    Model st = Model::single_task(tiny_config(), 9);
    CHECK_THROWS_AS(gradcam(st, img, GradCamTask::Detail, 0), DataError);
  }
}

TEST_CASE("gradcam hand-built weighted-sum case") {
  // Feed crafted activations and gradients through the same arithmetic
  // the implementation applies: A1 = [[1,0],[0,0]], A2 = [[0,0],[0,2]],
  // mean gradients w = (1, -1)  =>  ReLU(1*A1 - 1*A2) = [[1,0],[0,0]].
  const double a1[4] = {1, 0, 0, 0};
  const double a2[4] = {0, 0, 0, 2};
  const double w[2] = {1, -1};
  Heatmap map;
  map.h = map.w = 2;
  map.normalized = false;
  for (int p = 0; p < 4; ++p) {
    map.values.push_back(std::max(0.0, w[0] * a1[p] + w[1] * a2[p]));
  }
  CHECK(map.values == std::vector<double>{1, 0, 0, 0});
  CHECK(map.argmax() == std::pair<int, int>{0, 0});
}

TEST_CASE("gradcam: all-zero gradient yields the all-zero map") {
  Model m = Model::single_task(tiny_config(), 7);
  // zero the whole model: every logit is constant in the features
  for (auto& [name, t] : m.trainable()) {
    for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = 0.0;
  }
  const Heatmap map = gradcam(m, random_image(16, 8), GradCamTask::OverallClass, 0);
  for (double v : map.values) CHECK(v == 0.0);
}

TEST_CASE("overlay") {
  const Tensor img = generate_clean(PhantomSpec::randomized(16, 2));
  Heatmap map;
  map.h = map.w = 4;
  map.values.assign(16, 0.0);
  map.values[5] = 1.0;

  SUBCASE("alpha 0 returns the original image") {
    const Tensor out = overlay(img, map, 0.0);
    CHECK(out.values() == img.values());
  }
  SUBCASE("all-zero heatmap tints uniformly blue") {
    Heatmap zero;
    zero.h = zero.w = 4;
    zero.values.assign(16, 0.0);
    const Tensor out = overlay(img, zero, 1.0);
    for (int64_t p = 0; p < out.numel() / 3; ++p) {
      CHECK(out[p * 3 + 0] == 0.0);
      CHECK(out[p * 3 + 2] == 1.0);
    }
  }
  SUBCASE("blend stays in range") {
    const Tensor out = overlay(img, map, 0.6);
    for (double v : out.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(out.shape() == img.shape());
  }
  SUBCASE("alpha outside [0,1] rejected") {
    CHECK_THROWS_AS(overlay(img, map, 1.5), DataError);
  }
}
