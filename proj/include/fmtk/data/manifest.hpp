#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

enum class Split { Train, Val, Test };
enum class LabelStyle { TwoClass, ThreeClass };

const char* split_name(Split s);
Split parse_split(const std::string& s);
int num_classes(LabelStyle style);
const char* style_name(LabelStyle s);
LabelStyle parse_style(const std::string& s);

constexpr const char* kManifestHeader =
    "image,split,overall,illum,clarity,contrast,p_illum,p_clarity,p_contrast";

struct ManifestRow {
  std::string image;  // path relative to the manifest's directory
  Split split = Split::Train;
  std::optional<int> overall;
  std::array<std::optional<int>, 3> details;    // 1 = good, 0 = bad
  std::array<std::optional<double>, 3> pseudo;  // probabilities in [0,1]
};

struct Dataset {
  std::vector<ManifestRow> rows;
  LabelStyle style = LabelStyle::ThreeClass;
  int image_size = 32;   // preprocessing size
  std::string root;      // directory the image paths resolve against

  std::vector<ManifestRow> rows_for(Split s) const;
  std::string resolve(const std::string& image_path) const;
};

// Parses and validates a manifest CSV. Label ranges are checked against
// `style`; referenced image files must exist. Errors name the offending
// line (header is line 1).
Dataset load_manifest(const std::string& path, LabelStyle style, int image_size);

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

// Stratified holdout of `fraction` of the given rows by overall label:
// round(fraction * class_size) per class, at least 1. Deterministic in
// seed. A class with a single sample is an error (the holdout would
// consume it entirely); use a larger dataset.
std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>>
split_holdout(const std::vector<ManifestRow>& rows, double fraction, uint64_t seed);

// All rows of one split loaded into memory, preprocessed (FOV crop +
// bilinear resize) to the dataset's image size.
struct SplitData {
  std::vector<Tensor> images;
  std::vector<int> overall;                      // valid when has_overall
  std::vector<std::array<int, 3>> details;       // valid when has_details
  std::vector<std::array<double, 3>> pseudo;     // valid when has_pseudo
  bool has_overall = false;
  bool has_details = false;
  bool has_pseudo = false;

  std::size_t size() const { return images.size(); }
};

SplitData load_split(const Dataset& ds, Split split);
SplitData load_rows(const Dataset& ds, const std::vector<ManifestRow>& rows);

}  // namespace fmtk
