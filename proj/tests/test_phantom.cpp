#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "fmtk/common/error.hpp"
#include "fmtk/data/image_ops.hpp"
#include "fmtk/data/manifest.hpp"
#include "fmtk/phantom/phantom.hpp"

using namespace fmtk;
namespace fs = std::filesystem;

namespace {

double fov_mean(const Tensor& img) {
  const int size = img.dim(0);
  const double c = (size - 1) / 2.0, r = size / 2.0 - 1.0;
  double total = 0.0;
  int64_t n = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (std::hypot(x - c, y - c) <= r) {
        for (int ch = 0; ch < 3; ++ch) total += img.at({y, x, ch});
        n += 3;
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("generate_clean determinism and FOV background") {
  const PhantomSpec spec = PhantomSpec::randomized(32, 7);
  const Tensor a = generate_clean(spec);
  const Tensor b = generate_clean(spec);
  CHECK(a.values() == b.values());  // bitwise

  const double c = (32 - 1) / 2.0, r = 32 / 2.0 - 1.0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (std::hypot(x - c, y - c) > r) {
        for (int ch = 0; ch < 3; ++ch) CHECK(a.at({y, x, ch}) == 0.0);
      }
    }
  }
}

TEST_CASE("generate_clean size bounds") {
  PhantomSpec spec = PhantomSpec::randomized(32, 1);
  spec.size = 8;
  CHECK_THROWS_AS(generate_clean(spec), DataError);
  spec.size = 256;
  CHECK_THROWS_AS(generate_clean(spec), DataError);
}

TEST_CASE("mean FOV intensity within [0.2, 0.8] over 100 seeds") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor img = generate_clean(PhantomSpec::randomized(32, seed));
    const double m = fov_mean(img);
    CHECK(m >= 0.2);
    CHECK(m <= 0.8);
  }
}

TEST_CASE("degrade: all-zero severities are a bitwise no-op") {
  const Tensor img = generate_clean(PhantomSpec::randomized(32, 3));
  const DegradeResult r = degrade(img, {}, 99);
  CHECK(r.image.values() == img.values());
  for (double v : r.artifact_mask.values()) CHECK(v == 0.0);
}

TEST_CASE("degrade: contrast 1 shrinks channel stddev to <= 0.2x") {
  const Tensor img = generate_clean(PhantomSpec::randomized(48, 4));
  DefectSeverities sev;
  sev.contrast = 1.0;
  const DegradeResult r = degrade(img, sev, 5);
  double before[3], after[3];
  channel_stddev(img, before);
  channel_stddev(r.image, after);
  for (int c = 0; c < 3; ++c) CHECK(after[c] <= 0.2 * before[c] + 1e-12);
}

TEST_CASE("degrade: clarity strictly reduces Laplacian energy") {
  const Tensor img = generate_clean(PhantomSpec::randomized(32, 5));
  DefectSeverities sev;
  sev.clarity = 0.8;
  const DegradeResult r = degrade(img, sev, 6);
  CHECK(mean_abs_laplacian(r.image) < mean_abs_laplacian(img));
}

TEST_CASE("degrade: artifact mask confined to FOV, nonempty when lit") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor img = generate_clean(PhantomSpec::randomized(32, seed));
    DefectSeverities sev;
    sev.illumination = 0.9;
    const DegradeResult r = degrade(img, sev, seed);
    const double c = (32 - 1) / 2.0, rad = 32 / 2.0 - 1.0;
    int64_t area = 0;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if (r.artifact_mask.at({y, x}) > 0.5) {
          ++area;
          CHECK(std::hypot(x - c, y - c) <= rad);
        }
      }
    }
    CHECK(area > 0);
  }
}

TEST_CASE("degrade rejects bad severities") {
  const Tensor img = generate_clean(PhantomSpec::randomized(32, 8));
  DefectSeverities sev;
  sev.illumination = 1.5;
  CHECK_THROWS_AS(degrade(img, sev, 1), DataError);
  sev.illumination = -0.1;
  CHECK_THROWS_AS(degrade(img, sev, 1), DataError);
}

TEST_CASE("derive_labels mapping rules") {
  CHECK(derive_labels({0, 0, 0}, LabelStyle::ThreeClass).overall == 2);
  CHECK(derive_labels({0, 0, 0}, LabelStyle::ThreeClass).details == std::array<int, 3>{1, 1, 1});
  const auto reject = derive_labels({0.9, 0, 0}, LabelStyle::ThreeClass);
  CHECK(reject.overall == 0);
  CHECK(reject.details == std::array<int, 3>{0, 1, 1});
  const auto usable = derive_labels({0.4, 0.4, 0.4}, LabelStyle::ThreeClass);
  CHECK(usable.overall == 1);
  CHECK(usable.details == std::array<int, 3>{1, 1, 1});
  CHECK(derive_labels({0.5, 0, 0}, LabelStyle::TwoClass).overall == 0);
  CHECK(derive_labels({0.49, 0.49, 0.49}, LabelStyle::TwoClass).overall == 1);
}

TEST_CASE("derive_labels monotone in severity") {
  // raising any severity never improves the overall label
  for (int base = 0; base <= 10; ++base) {
    for (int bump = 0; bump <= 10 - base; ++bump) {
      DefectSeverities lo{base / 10.0, 0.2, 0.1};
      DefectSeverities hi{(base + bump) / 10.0, 0.2, 0.1};
      CHECK(derive_labels(hi, LabelStyle::ThreeClass).overall <= derive_labels(lo, LabelStyle::ThreeClass).overall);
      CHECK(derive_labels(hi, LabelStyle::TwoClass).overall <= derive_labels(lo, LabelStyle::TwoClass).overall);
    }
  }
}

TEST_CASE("generate_dataset: split arithmetic, determinism, class balance") {
  const fs::path dir = fs::temp_directory_path() / "fmtk_phantom_ds";
  fs::remove_all(dir);

  DatasetGenConfig cfg;
  cfg.count = 100;
  cfg.fractions = {0.8, 0.1, 0.1};
  cfg.seed = 11;
  cfg.size = 24;
  cfg.out_dir = (dir / "a").string();
  generate_dataset(cfg);

  Dataset ds = load_manifest((dir / "a" / "manifest.csv").string(), LabelStyle::ThreeClass, 24);
  CHECK(ds.rows.size() == 100);
  CHECK(ds.rows_for(Split::Train).size() == 80);
  CHECK(ds.rows_for(Split::Val).size() == 10);
  CHECK(ds.rows_for(Split::Test).size() == 10);

  SUBCASE("same seed twice gives identical manifests") {
    cfg.out_dir = (dir / "b").string();
    generate_dataset(cfg);
    std::ifstream f1(dir / "a" / "manifest.csv"), f2(dir / "b" / "manifest.csv");
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }

  SUBCASE("3-class, count 600: every overall class holds >= 10% of rows") {
    DatasetGenConfig big = cfg;
    big.count = 600;
    big.size = 16;
    big.out_dir = (dir / "big").string();
    generate_dataset(big);
    Dataset bds = load_manifest((dir / "big" / "manifest.csv").string(), LabelStyle::ThreeClass, 16);
    std::map<int, int> counts;
    for (const auto& r : bds.rows) ++counts[*r.overall];
    for (int c = 0; c < 3; ++c) CHECK(counts[c] >= 60);
  }

  fs::remove_all(dir);
}
