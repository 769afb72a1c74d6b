#include "fmtk/data/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/data/image_ops.hpp"
#include "fmtk/data/png_io.hpp"

namespace fs = std::filesystem;

namespace fmtk {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError(fmt::format("unknown split tag '{}'", s));
}

int num_classes(LabelStyle style) { return style == LabelStyle::TwoClass ? 2 : 3; }

const char* style_name(LabelStyle s) { return s == LabelStyle::TwoClass ? "2class" : "3class"; }

LabelStyle parse_style(const std::string& s) {
  if (s == "2class") return LabelStyle::TwoClass;
  if (s == "3class") return LabelStyle::ThreeClass;
  throw DataError(fmt::format("unknown label style '{}' (expected 2class or 3class)", s));
}

std::vector<ManifestRow> Dataset::rows_for(Split s) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

std::string Dataset::resolve(const std::string& image_path) const {
  const fs::path p(image_path);
  if (p.is_absolute() || root.empty()) return image_path;
  return (fs::path(root) / p).string();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::optional<int> parse_opt_int(const std::string& s, int line_no, const char* what) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError(fmt::format("line {}: bad {} value '{}'", line_no, what, s));
  }
  return v;
}

std::optional<double> parse_opt_float(const std::string& s, int line_no, const char* what) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("line {}: bad {} value '{}'", line_no, what, s));
  }
}

}  // namespace

Dataset load_manifest(const std::string& path, LabelStyle style, int image_size) {
  std::istringstream in(read_file(path));
  Dataset ds;
  ds.style = style;
  ds.image_size = image_size;
  ds.root = fs::path(path).parent_path().string();

  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("'{}' is empty", path));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw DataError(fmt::format("'{}' line 1: bad header (expected '{}')", path, kManifestHeader));
  }

  const int classes = num_classes(style);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 9) {
      throw DataError(fmt::format("'{}' line {}: expected 9 fields, got {}", path, line_no, fields.size()));
    }
    ManifestRow row;
    row.image = fields[0];
    if (row.image.empty()) throw DataError(fmt::format("'{}' line {}: empty image path", path, line_no));
    try {
      row.split = parse_split(fields[1]);
    } catch (const DataError& e) {
      throw DataError(fmt::format("'{}' line {}: {}", path, line_no, e.what()));
    }
    row.overall = parse_opt_int(fields[2], line_no, "overall");
    if (row.overall && (*row.overall < 0 || *row.overall >= classes)) {
      throw DataError(fmt::format("'{}' line {}: overall label {} outside [0,{}) for {} style",
                                  path, line_no, *row.overall, classes, style_name(style)));
    }
    for (int j = 0; j < 3; ++j) {
      auto v = parse_opt_int(fields[static_cast<std::size_t>(3 + j)], line_no, "detail");
      if (v && *v != 0 && *v != 1) {
        throw DataError(fmt::format("'{}' line {}: detail label {} not in {{0,1}}", path, line_no, *v));
      }
      row.details[static_cast<std::size_t>(j)] = v;
    }
    for (int j = 0; j < 3; ++j) {
      auto v = parse_opt_float(fields[static_cast<std::size_t>(6 + j)], line_no, "pseudo-label");
      if (v && (*v < 0.0 || *v > 1.0)) {
        throw DataError(fmt::format("'{}' line {}: pseudo-label {} outside [0,1]", path, line_no, *v));
      }
      row.pseudo[static_cast<std::size_t>(j)] = v;
    }
    if (!fs::exists(ds.resolve(row.image))) {
      throw DataError(fmt::format("'{}' line {}: image file '{}' not found", path, line_no, row.image));
    }
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << kManifestHeader << "\n";
  for (const auto& r : rows) {
    if (r.image.find(',') != std::string::npos) {
      throw DataError(fmt::format("image path '{}' contains a comma", r.image));
    }
    out << r.image << "," << split_name(r.split) << ",";
    if (r.overall) out << *r.overall;
    for (int j = 0; j < 3; ++j) {
      out << ",";
      if (r.details[static_cast<std::size_t>(j)]) out << *r.details[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < 3; ++j) {
      out << ",";
      if (r.pseudo[static_cast<std::size_t>(j)]) out << fmt::format("{:.17g}", *r.pseudo[static_cast<std::size_t>(j)]);
    }
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>>
split_holdout(const std::vector<ManifestRow>& rows, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw DataError(fmt::format("split_holdout: fraction must be in (0, 0.5], got {}", fraction));
  }
  if (rows.size() < 10) {
    throw DataError(fmt::format("split_holdout: need at least 10 rows, got {}", rows.size()));
  }
  // strata by overall label; rows without one form their own stratum
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    strata[rows[i].overall.value_or(-1)].push_back(i);
  }
  std::vector<bool> held(rows.size(), false);
  for (auto& [label, idx] : strata) {
    if (idx.size() < 2) {
      throw DataError(fmt::format("split_holdout: overall class {} has a single sample; use a larger dataset", label));
    }
    const auto want = std::max<int64_t>(1, std::llround(fraction * static_cast<double>(idx.size())));
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(label + 1)));
    rng.shuffle(idx);
    for (int64_t k = 0; k < want; ++k) held[idx[static_cast<std::size_t>(k)]] = true;
  }
  std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (held[i] ? out.second : out.first).push_back(rows[i]);
  }
  return out;
}

SplitData load_rows(const Dataset& ds, const std::vector<ManifestRow>& rows) {
  SplitData d;
  d.has_overall = !rows.empty();
  d.has_details = !rows.empty();
  d.has_pseudo = !rows.empty();
  for (const auto& r : rows) {
    Tensor img;
    try {
      img = read_png_rgb8(ds.resolve(r.image));
    } catch (const DataError& e) {
      throw DataError(fmt::format("unreadable image '{}': {}", r.image, e.what()));
    }
    d.images.push_back(preprocess(img, ds.image_size));
    d.overall.push_back(r.overall.value_or(-1));
    if (!r.overall) d.has_overall = false;
    std::array<int, 3> det{};
    std::array<double, 3> ps{};
    for (int j = 0; j < 3; ++j) {
      const auto& dj = r.details[static_cast<std::size_t>(j)];
      const auto& pj = r.pseudo[static_cast<std::size_t>(j)];
      det[static_cast<std::size_t>(j)] = dj.value_or(-1);
      ps[static_cast<std::size_t>(j)] = pj.value_or(-1.0);
      if (!dj) d.has_details = false;
      if (!pj) d.has_pseudo = false;
    }
    d.details.push_back(det);
    d.pseudo.push_back(ps);
  }
  return d;
}

SplitData load_split(const Dataset& ds, Split split) {
  return load_rows(ds, ds.rows_for(split));
}

}  // namespace fmtk
