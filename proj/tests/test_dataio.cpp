#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/data/image_ops.hpp"
#include "fmtk/data/manifest.hpp"
#include "fmtk/data/png_io.hpp"
#include "fmtk/phantom/phantom.hpp"

using namespace fmtk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor circle_image(int h, int w, double cx, double cy, double r, double value = 0.8) {
  Tensor img({h, w, 3});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (std::hypot(x - cx, y - cy) <= r) {
        for (int c = 0; c < 3; ++c) img.at({y, x, c}) = value;
      }
    }
  }
  return img;
}

}  // namespace

TEST_CASE("png round-trip at 8-bit precision") {
  TempDir dir("fmtk_png_test");
  Rng rng(3);
  Tensor img({9, 13, 3});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
  const std::string path = (dir.path / "img.png").string();
  write_png_rgb8(path, img);
  const Tensor back = read_png_rgb8(path);
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i) {
    CHECK(std::abs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-12);  // quantization bound
  }

  SUBCASE("gray mask round-trip") {
    Tensor mask({5, 7});
    mask.at({2, 3}) = 1.0;
    const std::string mpath = (dir.path / "mask.png").string();
    write_png_gray8(mpath, mask);
    const Tensor mb = read_png_gray8(mpath);
    CHECK(mb.at({2, 3}) == 1.0);
    CHECK(mb.at({0, 0}) == 0.0);
  }
  SUBCASE("identical content yields identical bytes") {
    const std::string p2 = (dir.path / "img2.png").string();
    write_png_rgb8(p2, img);
    CHECK(read_file(path) == read_file(p2));
  }
}

TEST_CASE("fov_crop") {
  SUBCASE("tight square content unchanged") {
    Tensor img = circle_image(20, 20, 9.5, 9.5, 9.4);
    const Tensor cropped = fov_crop(img);
    CHECK(cropped.dim(0) == cropped.dim(1));
    CHECK(std::abs(cropped.dim(0) - 19) <= 1);
  }
  SUBCASE("circle in the left half of a wide image") {
    // circle of radius 8 centered at (12, 15) in a 32x64 canvas
    Tensor img = circle_image(32, 64, 12.0, 15.0, 8.0);
    const Tensor cropped = fov_crop(img);
    // bounding box of the circle is 17 px a side (+-1 for rasterization)
    CHECK(std::abs(cropped.dim(0) - 17) <= 1);
    CHECK(cropped.dim(0) == cropped.dim(1));
    // content is centered: corners are padding or background
    CHECK(cropped.at({0, 0, 0}) == 0.0);
  }
  SUBCASE("all-black image raises no-FOV error") {
    Tensor img({16, 16, 3});
    CHECK_THROWS_WITH_AS(fov_crop(img), doctest::Contains("no FOV"), DataError);
  }
  SUBCASE("idempotence up to resize rounding") {
    const Tensor img = generate_clean(PhantomSpec::randomized(48, 21));
    const Tensor once = fov_crop(img);
    const Tensor twice = fov_crop(once);
    REQUIRE(once.shape() == twice.shape());
    for (int64_t i = 0; i < once.numel(); ++i) CHECK(once[i] == twice[i]);
  }
}

TEST_CASE("resize_bilinear shape and range") {
  const Tensor img = generate_clean(PhantomSpec::randomized(32, 2));
  const Tensor small = resize_bilinear(img, 16, 16);
  CHECK(small.shape() == std::vector<int>{16, 16, 3});
  for (double v : small.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("manifest load/write") {
  TempDir dir("fmtk_manifest_test");
  // a tiny real dataset to reference
  DatasetGenConfig cfg;
  cfg.count = 30;
  cfg.fractions = {0.6, 0.2, 0.2};
  cfg.seed = 5;
  cfg.size = 16;
  cfg.out_dir = dir.path.string();
  generate_dataset(cfg);
  const std::string manifest = (dir.path / "manifest.csv").string();

  SUBCASE("round-trip write -> load gives equal datasets") {
    Dataset ds = load_manifest(manifest, LabelStyle::ThreeClass, 16);
    const std::string copy = (dir.path / "copy.csv").string();
    write_manifest(copy, ds.rows);
    Dataset ds2 = load_manifest(copy, LabelStyle::ThreeClass, 16);
    REQUIRE(ds.rows.size() == ds2.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
      CHECK(ds.rows[i].image == ds2.rows[i].image);
      CHECK(ds.rows[i].split == ds2.rows[i].split);
      CHECK(ds.rows[i].overall == ds2.rows[i].overall);
      CHECK(ds.rows[i].details == ds2.rows[i].details);
      CHECK(ds.rows[i].pseudo == ds2.rows[i].pseudo);
    }
  }
  SUBCASE("empty data section is a valid empty dataset") {
    const std::string p = (dir.path / "empty.csv").string();
    write_file_atomic(p, std::string(kManifestHeader) + "\n");
    Dataset ds = load_manifest(p, LabelStyle::ThreeClass, 16);
    CHECK(ds.rows.empty());
  }
  SUBCASE("out-of-range overall label names the line") {
    const std::string p = (dir.path / "bad.csv").string();
    write_file_atomic(p, std::string(kManifestHeader) + "\nimages/sample_00000.png,train,3,,,,,,\n");
    CHECK_THROWS_WITH_AS(load_manifest(p, LabelStyle::ThreeClass, 16), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("missing file rejected with line number") {
    const std::string p = (dir.path / "missing.csv").string();
    write_file_atomic(p, std::string(kManifestHeader) + "\nimages/nope.png,train,1,,,,,,\n");
    CHECK_THROWS_WITH_AS(load_manifest(p, LabelStyle::ThreeClass, 16), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("unknown split tag rejected") {
    const std::string p = (dir.path / "split.csv").string();
    write_file_atomic(p, std::string(kManifestHeader) + "\nimages/sample_00000.png,holdout,1,,,,,,\n");
    CHECK_THROWS_WITH_AS(load_manifest(p, LabelStyle::ThreeClass, 16), doctest::Contains("split"), DataError);
  }
  SUBCASE("bad header rejected") {
    const std::string p = (dir.path / "hdr.csv").string();
    write_file_atomic(p, "image,split\n");
    CHECK_THROWS_WITH_AS(load_manifest(p, LabelStyle::ThreeClass, 16), doctest::Contains("header"), DataError);
  }
  SUBCASE("load_split materializes preprocessed images") {
    Dataset ds = load_manifest(manifest, LabelStyle::ThreeClass, 16);
    SplitData d = load_split(ds, Split::Train);
    CHECK(d.size() == ds.rows_for(Split::Train).size());
    CHECK(d.has_overall);
    CHECK(d.has_details);
    CHECK(!d.has_pseudo);
    for (const auto& img : d.images) CHECK(img.shape() == std::vector<int>{16, 16, 3});
  }
}

TEST_CASE("split_holdout") {
  auto make_rows = [](const std::vector<int>& class_sizes) {
    std::vector<ManifestRow> rows;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
      for (int i = 0; i < class_sizes[c]; ++i) {
        ManifestRow r;
        r.image = "x.png";
        r.split = Split::Train;
        r.overall = static_cast<int>(c);
        rows.push_back(r);
      }
    }
    return rows;
  };

  SUBCASE("even 3-class 100 rows at 0.1") {
    auto rows = make_rows({34, 33, 33});
    auto [train, val] = split_holdout(rows, 0.1, 1);
    CHECK(train.size() + val.size() == 100);
    CHECK(val.size() >= 9);
    CHECK(val.size() <= 12);
    std::array<int, 3> per_class{};
    for (const auto& r : val) ++per_class[static_cast<std::size_t>(*r.overall)];
    for (int c = 0; c < 3; ++c) {
      CHECK(per_class[static_cast<std::size_t>(c)] >= 3);
      CHECK(per_class[static_cast<std::size_t>(c)] <= 4);
    }
  }
  SUBCASE("642 rows at 0.1 holds out 64-65 (the MSHF protocol)") {
    auto rows = make_rows({300, 200, 142});
    auto [train, val] = split_holdout(rows, 0.1, 2);
    CHECK(val.size() >= 64);
    CHECK(val.size() <= 65);
    CHECK(train.size() + val.size() == 642);
  }
  SUBCASE("deterministic in seed") {
    auto rows = make_rows({40, 40, 20});
    auto [t1, v1] = split_holdout(rows, 0.2, 7);
    auto [t2, v2] = split_holdout(rows, 0.2, 7);
    CHECK(v1.size() == v2.size());
    bool same = true;
    for (std::size_t i = 0; i < v1.size(); ++i) same &= v1[i].overall == v2[i].overall;
    CHECK(same);
  }
  SUBCASE("partition property") {
    auto rows = make_rows({15, 15});
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].image = "img" + std::to_string(i) + ".png";
    auto [train, val] = split_holdout(rows, 0.25, 3);
    CHECK(train.size() + val.size() == rows.size());
    std::vector<std::string> all;
    for (const auto& r : train) all.push_back(r.image);
    for (const auto& r : val) all.push_back(r.image);
    std::sort(all.begin(), all.end());
    std::vector<std::string> expect;
    for (const auto& r : rows) expect.push_back(r.image);
    std::sort(expect.begin(), expect.end());
    CHECK(all == expect);  // train ∪ val = input, train ∩ val = ∅
  }
  SUBCASE("single-sample class is an error") {
    auto rows = make_rows({12, 1});
    CHECK_THROWS_WITH_AS(split_holdout(rows, 0.1, 1), doctest::Contains("larger dataset"), DataError);
  }
  SUBCASE("fraction bounds") {
    auto rows = make_rows({20, 20});
    CHECK_THROWS_AS(split_holdout(rows, 0.0, 1), DataError);
    CHECK_THROWS_AS(split_holdout(rows, 0.6, 1), DataError);
  }
}
