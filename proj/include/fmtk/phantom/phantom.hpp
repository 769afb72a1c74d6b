#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "fmtk/data/manifest.hpp"
#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Procedural fundus phantom: an orange circular field of view on black
// background with a bright optic disc, a darker fovea and a branching
// vessel tree. Geometry is expressed in FOV radii; centers are offsets
// from the image center. The FOV radius is size/2 - 1, leaving a black
// frame of at least one pixel.
struct PhantomSpec {
  int size = 32;
  uint64_t seed = 0;

  double disc_cx = 0.5, disc_cy = 0.0;
  double disc_radius = 0.16;
  double fovea_cx = -0.2, fovea_cy = 0.0;
  double fovea_radius = 0.11;
  int vessel_branches = 5;
  double vessel_width = 0.05;  // trunk half-width

  // Draws plausible anatomy from the seed.
  static PhantomSpec randomized(int size, uint64_t seed);
  void validate() const;
};

struct DefectSeverities {
  double illumination = 0.0;
  double clarity = 0.0;
  double contrast = 0.0;

  void validate() const;
};

struct OracleLabels {
  std::array<int, 3> details{1, 1, 1};  // 1 = good, 0 = bad
  int overall = 0;
};

Tensor generate_clean(const PhantomSpec& spec);

struct DegradeResult {
  Tensor image;
  Tensor artifact_mask;  // (H,W) binary; all-zero when illumination is 0
};

// Applies, in order: illumination (global gain 1 - 0.4s plus a localized
// bright or dark elliptical artifact of opacity s, recorded in the mask),
// clarity (separable box blur of radius round(s * size/16)) and contrast
// (range compression toward the per-channel mean by 1 - 0.8s). A severity
// of exactly 0 leaves its stage out entirely, so all-zero severities
// return the input bit for bit.
DegradeResult degrade(const Tensor& image, const DefectSeverities& sev, uint64_t seed);

// Label oracle. Detail j is bad iff severity_j >= 0.5. With
// worst = max severity: 3-class gives good under 0.35, reject from 0.65;
// 2-class is bad from 0.5.
OracleLabels derive_labels(const DefectSeverities& sev, LabelStyle style);

struct DatasetGenConfig {
  int count = 100;
  LabelStyle style = LabelStyle::ThreeClass;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, val, test
  uint64_t seed = 0;
  int size = 32;
  std::string out_dir;
};

// Renders `count` phantoms with severities from a mixture (40% pristine
// draws with severities in [0, 0.1], 60% independent uniform [0,1] per
// defect), writes images/ (PNG), masks/ (PNG, artifact masks), a manifest
// stratified by overall class across the three splits, and oracle.csv
// with the raw severities.
void generate_dataset(const DatasetGenConfig& cfg);

}  // namespace fmtk
