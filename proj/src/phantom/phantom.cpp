#include "fmtk/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/data/png_io.hpp"

namespace fs = std::filesystem;

namespace fmtk {

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Fov {
  double cx, cy, r;
  explicit Fov(int size) : cx((size - 1) / 2.0), cy((size - 1) / 2.0), r(size / 2.0 - 1.0) {}
  double dist(double x, double y) const { return std::hypot(x - cx, y - cy); }
  bool inside(double x, double y) const { return dist(x, y) <= r; }
};

struct Segment {
  double x0, y0, x1, y1, half_width;
};

double point_segment_dist(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

void grow_vessel(std::vector<Segment>& out, Rng& rng, double x, double y, double angle,
                 double half_width, double step, int steps, int depth) {
  for (int i = 0; i < steps; ++i) {
    const double nx = x + step * std::cos(angle);
    const double ny = y + step * std::sin(angle);
    out.push_back({x, y, nx, ny, half_width});
    x = nx;
    y = ny;
    angle += rng.uniform(-0.35, 0.35);
    half_width *= 0.985;
    if (depth < 2 && (i == steps / 3 || i == (2 * steps) / 3)) {
      const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
      grow_vessel(out, rng, x, y, angle + side * rng.uniform(0.4, 0.9),
                  half_width * 0.7, step, steps - i, depth + 1);
    }
  }
}

}  // namespace

PhantomSpec PhantomSpec::randomized(int size, uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x9ca7));
  PhantomSpec s;
  s.size = size;
  s.seed = seed;
  const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;  // disc on left or right
  const double disc_dist = rng.uniform(0.45, 0.62);
  const double disc_angle = rng.uniform(-0.4, 0.4);
  s.disc_cx = side * disc_dist * std::cos(disc_angle);
  s.disc_cy = disc_dist * std::sin(disc_angle);
  s.disc_radius = rng.uniform(0.12, 0.20);
  const double fovea_dist = rng.uniform(0.05, 0.22);
  const double fovea_angle = rng.uniform(-0.5, 0.5);
  s.fovea_cx = -side * fovea_dist * std::cos(fovea_angle);
  s.fovea_cy = fovea_dist * std::sin(fovea_angle);
  s.fovea_radius = rng.uniform(0.08, 0.14);
  s.vessel_branches = static_cast<int>(rng.uniform_int(4, 7));
  s.vessel_width = rng.uniform(0.035, 0.06);
  s.validate();
  return s;
}

void PhantomSpec::validate() const {
  if (size < 16 || size > 128) {
    throw DataError(fmt::format("phantom size {} outside [16, 128]", size));
  }
  if (!(disc_radius > 0.0) || disc_radius >= 0.25) {
    throw DataError(fmt::format("disc radius {} must be in (0, FOV/4)", disc_radius));
  }
  if (std::hypot(disc_cx, disc_cy) + disc_radius > 1.0) throw DataError("optic disc extends outside the FOV");
  if (!(fovea_radius > 0.0) || std::hypot(fovea_cx, fovea_cy) + fovea_radius > 1.0) {
    throw DataError("fovea extends outside the FOV");
  }
  if (vessel_branches < 0 || vessel_branches > 16) throw DataError("vessel branch count outside [0, 16]");
  if (!(vessel_width > 0.0) || vessel_width > 0.2) throw DataError("vessel width outside (0, 0.2]");
}

Tensor generate_clean(const PhantomSpec& spec) {
  spec.validate();
  const int size = spec.size;
  const Fov fov(size);
  Rng rng(Rng::mix(spec.seed, 0x51ee));

  // per-seed tint and texture parameters
  const double base_r = 0.82 + rng.uniform(-0.06, 0.06);
  const double base_g = 0.42 + rng.uniform(-0.05, 0.05);
  const double base_b = 0.16 + rng.uniform(-0.04, 0.04);
  const double tex_fx = rng.uniform(0.5, 2.0) / size;
  const double tex_fy = rng.uniform(0.5, 2.0) / size;
  const double tex_phase = rng.uniform(0.0, 6.28318530717958648);

  const double disc_x = fov.cx + spec.disc_cx * fov.r;
  const double disc_y = fov.cy + spec.disc_cy * fov.r;
  const double disc_r = spec.disc_radius * fov.r;
  const double disc_stretch = rng.uniform(1.0, 1.2);
  const double fovea_x = fov.cx + spec.fovea_cx * fov.r;
  const double fovea_y = fov.cy + spec.fovea_cy * fov.r;
  const double fovea_r = spec.fovea_radius * fov.r;

  // vessel tree growing out of the disc
  std::vector<Segment> vessels;
  Rng vrng(Rng::mix(spec.seed, 0x7e55e1));
  for (int b = 0; b < spec.vessel_branches; ++b) {
    const double angle = vrng.uniform(0.0, 6.28318530717958648);
    grow_vessel(vessels, vrng, disc_x, disc_y, angle, spec.vessel_width * fov.r,
                std::max(1.0, size / 16.0), 8, 0);
  }

  Tensor img({size, size, 3});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!fov.inside(x, y)) continue;  // outside FOV stays exactly 0
      const double rr = fov.dist(x, y) / fov.r;
      const double vignette = 1.0 - 0.25 * rr * rr;
      const double texture = 1.0 + 0.04 * std::sin(6.28318530717958648 * (x * tex_fx + y * tex_fy) + tex_phase);
      double r = base_r * vignette * texture;
      double g = base_g * vignette * texture;
      double b = base_b * vignette * texture;

      // fovea darkening
      const double fd = std::hypot(x - fovea_x, y - fovea_y);
      const double fovea_k = 1.0 - 0.45 * (1.0 - smoothstep(fovea_r * 0.6, fovea_r, fd));
      r *= fovea_k;
      g *= fovea_k;
      b *= fovea_k;

      // vessels darken toward a deep red
      double vcov = 0.0;
      for (const auto& s : vessels) {
        const double d = point_segment_dist(x, y, s);
        vcov = std::max(vcov, 1.0 - smoothstep(s.half_width * 0.5, s.half_width + 0.7, d));
        if (vcov >= 1.0) break;
      }
      if (vcov > 0.0) {
        const double k = 0.8 * vcov;
        r = (1 - k) * r + k * 0.45;
        g = (1 - k) * g + k * 0.12;
        b = (1 - k) * b + k * 0.10;
      }

      // bright disc ellipse on top
      const double ex = (x - disc_x) / (disc_r * disc_stretch);
      const double ey = (y - disc_y) / disc_r;
      const double ed = std::hypot(ex, ey);
      const double disc_k = 1.0 - smoothstep(0.8, 1.0, ed);
      if (disc_k > 0.0) {
        r = (1 - disc_k) * r + disc_k * 0.95;
        g = (1 - disc_k) * g + disc_k * 0.86;
        b = (1 - disc_k) * b + disc_k * 0.55;
      }

      // fade at the FOV rim
      const double rim = 1.0 - smoothstep(0.97, 1.0, rr);
      img.at({y, x, 0}) = std::clamp(r * rim, 0.0, 1.0);
      img.at({y, x, 1}) = std::clamp(g * rim, 0.0, 1.0);
      img.at({y, x, 2}) = std::clamp(b * rim, 0.0, 1.0);
    }
  }
  return img;
}

void DefectSeverities::validate() const {
  for (double s : {illumination, clarity, contrast}) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw DataError(fmt::format("defect severity {} outside [0,1]", s));
    }
  }
}

DegradeResult degrade(const Tensor& image, const DefectSeverities& sev, uint64_t seed) {
  sev.validate();
  if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1)) {
    throw DataError(fmt::format("degrade: expected square (S,S,3) image, got {}", shape_str(image.shape())));
  }
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("degrade: image values outside [0,1]");
  }
  const int size = image.dim(0);
  const Fov fov(size);

  DegradeResult res;
  res.image = image;
  res.artifact_mask = Tensor({size, size});
  Tensor& img = res.image;

  if (sev.illumination > 0.0) {
    const double s = sev.illumination;
    Rng rng(Rng::mix(seed, 0x111));
    const bool bright = rng.uniform() < 0.5;
    const double target = bright ? 1.0 : 0.0;
    const double dist = rng.uniform(0.0, 0.6);
    const double angle = rng.uniform(0.0, 6.28318530717958648);
    const double ax = fov.cx + dist * fov.r * std::cos(angle);
    const double ay = fov.cy + dist * fov.r * std::sin(angle);
    const double rx = rng.uniform(0.18, 0.45) * fov.r;
    const double ry = rng.uniform(0.18, 0.45) * fov.r;
    const double rot = rng.uniform(0.0, 3.14159265358979324);
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double gain = 1.0 - 0.4 * s;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double* px = img.data() + (static_cast<int64_t>(y) * size + x) * 3;
        for (int c = 0; c < 3; ++c) px[c] *= gain;
        const double ux = ((x - ax) * cr + (y - ay) * sr) / rx;
        const double uy = (-(x - ax) * sr + (y - ay) * cr) / ry;
        const double ed = std::hypot(ux, uy);
        if (ed <= 1.0 && fov.inside(x, y)) {
          const double alpha = s * (1.0 - smoothstep(0.7, 1.0, ed));
          for (int c = 0; c < 3; ++c) px[c] = (1.0 - alpha) * px[c] + alpha * target;
          res.artifact_mask.at({y, x}) = 1.0;
        }
      }
    }
  }

  if (sev.clarity > 0.0) {
    const int radius = static_cast<int>(std::lround(sev.clarity * size / 16.0));
    if (radius >= 1) {
      // separable box blur, window normalized by its in-bounds width
      Tensor tmp({size, size, 3});
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const int lo = std::max(0, x - radius), hi = std::min(size - 1, x + radius);
          double acc[3] = {0, 0, 0};
          for (int k = lo; k <= hi; ++k) {
            const double* px = img.data() + (static_cast<int64_t>(y) * size + k) * 3;
            for (int c = 0; c < 3; ++c) acc[c] += px[c];
          }
          const double inv = 1.0 / (hi - lo + 1);
          for (int c = 0; c < 3; ++c) tmp.at({y, x, c}) = acc[c] * inv;
        }
      }
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const int lo = std::max(0, y - radius), hi = std::min(size - 1, y + radius);
          double acc[3] = {0, 0, 0};
          for (int k = lo; k <= hi; ++k) {
            for (int c = 0; c < 3; ++c) acc[c] += tmp.at({k, x, c});
          }
          const double inv = 1.0 / (hi - lo + 1);
          for (int c = 0; c < 3; ++c) img.at({y, x, c}) = acc[c] * inv;
        }
      }
    }
  }

  if (sev.contrast > 0.0) {
    const double k = 1.0 - 0.8 * sev.contrast;
    double mean[3] = {0, 0, 0};
    const int64_t n = img.numel() / 3;
    for (int64_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) mean[c] += img[i * 3 + c];
    }
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        img[i * 3 + c] = mean[c] + (img[i * 3 + c] - mean[c]) * k;
      }
    }
  }

  if (sev.illumination > 0.0 || sev.clarity > 0.0 || sev.contrast > 0.0) {
    for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  }
  return res;
}

OracleLabels derive_labels(const DefectSeverities& sev, LabelStyle style) {
  sev.validate();
  OracleLabels out;
  const double s[3] = {sev.illumination, sev.clarity, sev.contrast};
  for (int j = 0; j < 3; ++j) out.details[static_cast<std::size_t>(j)] = s[j] >= 0.5 ? 0 : 1;
  const double worst = std::max({s[0], s[1], s[2]});
  if (style == LabelStyle::ThreeClass) {
    if (worst < 0.35) out.overall = 2;       // good
    else if (worst >= 0.65) out.overall = 0; // reject
    else out.overall = 1;                    // usable
  } else {
    out.overall = worst >= 0.5 ? 0 : 1;      // bad / good
  }
  return out;
}

namespace {

// Exact global split sizes by largest remainder, then per-class largest
// remainder constrained by the global deficit, so both the 80/10/10
// totals and the stratification hold.
std::vector<int> assign_splits(const std::vector<int>& labels, const std::array<double, 3>& fractions, uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  std::array<int, 3> global{};
  {
    std::array<double, 3> exact{};
    int used = 0;
    for (int s = 0; s < 3; ++s) {
      exact[static_cast<std::size_t>(s)] = fractions[static_cast<std::size_t>(s)] * n;
      global[static_cast<std::size_t>(s)] = static_cast<int>(std::floor(exact[static_cast<std::size_t>(s)]));
      used += global[static_cast<std::size_t>(s)];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double ra = exact[static_cast<std::size_t>(a)] - std::floor(exact[static_cast<std::size_t>(a)]);
      const double rb = exact[static_cast<std::size_t>(b)] - std::floor(exact[static_cast<std::size_t>(b)]);
      if (ra != rb) return ra > rb;
      return a < b;
    });
    for (int k = 0; k < n - used; ++k) ++global[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])];
  }

  std::map<int, std::vector<int>> strata;
  for (int i = 0; i < n; ++i) strata[labels[static_cast<std::size_t>(i)]].push_back(i);

  std::array<int, 3> deficit = global;
  std::vector<int> assignment(static_cast<std::size_t>(n), 0);
  // first pass: per-class floors
  std::map<int, std::array<int, 3>> class_counts;
  std::map<int, std::array<double, 3>> class_rema;
  for (auto& [label, idx] : strata) {
    std::array<int, 3> cnt{};
    std::array<double, 3> rem{};
    int used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fractions[static_cast<std::size_t>(s)] * static_cast<double>(idx.size());
      cnt[static_cast<std::size_t>(s)] = static_cast<int>(std::floor(exact));
      rem[static_cast<std::size_t>(s)] = exact - cnt[static_cast<std::size_t>(s)];
      used += cnt[static_cast<std::size_t>(s)];
      deficit[static_cast<std::size_t>(s)] -= cnt[static_cast<std::size_t>(s)];
    }
    class_counts[label] = cnt;
    class_rema[label] = rem;
    (void)used;
  }
  // second pass: hand out remainders where the global deficit allows
  for (auto& [label, idx] : strata) {
    auto& cnt = class_counts[label];
    int leftover = static_cast<int>(idx.size()) - cnt[0] - cnt[1] - cnt[2];
    while (leftover > 0) {
      int best = -1;
      for (int s = 0; s < 3; ++s) {
        if (deficit[static_cast<std::size_t>(s)] <= 0) continue;
        if (best < 0 || class_rema[label][static_cast<std::size_t>(s)] > class_rema[label][static_cast<std::size_t>(best)]) best = s;
      }
      if (best < 0) throw DataError("generate_dataset: split assignment infeasible");
      ++cnt[static_cast<std::size_t>(best)];
      --deficit[static_cast<std::size_t>(best)];
      class_rema[label][static_cast<std::size_t>(best)] = -1.0;  // used up
      --leftover;
    }
    Rng rng(Rng::mix(seed, 0x5711, static_cast<uint64_t>(label + 7)));
    rng.shuffle(idx);
    int k = 0;
    for (int s = 0; s < 3; ++s) {
      for (int c = 0; c < cnt[static_cast<std::size_t>(s)]; ++c, ++k) {
        assignment[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = s;
      }
    }
  }
  return assignment;
}

}  // namespace

void generate_dataset(const DatasetGenConfig& cfg) {
  if (cfg.count < 10) throw DataError(fmt::format("generate_dataset: count {} < 10", cfg.count));
  const double fsum = cfg.fractions[0] + cfg.fractions[1] + cfg.fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) throw DataError(fmt::format("generate_dataset: split fractions sum to {}", fsum));
  for (double f : cfg.fractions) {
    if (f < 0.0) throw DataError("generate_dataset: negative split fraction");
  }
  if (cfg.out_dir.empty()) throw DataError("generate_dataset: no output directory");
  std::error_code ec;
  fs::create_directories(fs::path(cfg.out_dir) / "images", ec);
  fs::create_directories(fs::path(cfg.out_dir) / "masks", ec);
  if (!fs::is_directory(cfg.out_dir)) {
    throw DataError(fmt::format("generate_dataset: cannot create output directory '{}'", cfg.out_dir));
  }

  std::vector<DefectSeverities> severities;
  std::vector<OracleLabels> labels;
  std::vector<int> overall;
  std::vector<int64_t> mask_area;
  severities.reserve(static_cast<std::size_t>(cfg.count));

  std::ostringstream oracle;
  oracle << "image,illumination,clarity,contrast,artifact_area\n";

  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(i)));
    DefectSeverities sev;
    if (rng.uniform() < 0.4) {
      sev.illumination = rng.uniform(0.0, 0.1);
      sev.clarity = rng.uniform(0.0, 0.1);
      sev.contrast = rng.uniform(0.0, 0.1);
    } else {
      sev.illumination = rng.uniform();
      sev.clarity = rng.uniform();
      sev.contrast = rng.uniform();
    }
    severities.push_back(sev);
    labels.push_back(derive_labels(sev, cfg.style));
    overall.push_back(labels.back().overall);

    const PhantomSpec spec = PhantomSpec::randomized(cfg.size, Rng::mix(cfg.seed, static_cast<uint64_t>(i), 1));
    const Tensor clean = generate_clean(spec);
    DegradeResult deg = degrade(clean, sev, Rng::mix(cfg.seed, static_cast<uint64_t>(i), 2));

    const std::string name = fmt::format("sample_{:05d}.png", i);
    write_png_rgb8((fs::path(cfg.out_dir) / "images" / name).string(), deg.image);
    int64_t area = 0;
    for (double v : deg.artifact_mask.values()) area += v > 0.5;
    mask_area.push_back(area);
    if (area > 0) {
      write_png_gray8((fs::path(cfg.out_dir) / "masks" / name).string(), deg.artifact_mask);
    }
    oracle << fmt::format("images/{},{:.17g},{:.17g},{:.17g},{}\n", name, sev.illumination, sev.clarity, sev.contrast, area);
  }

  const std::vector<int> assignment = assign_splits(overall, cfg.fractions, cfg.seed);
  std::vector<ManifestRow> rows;
  for (int i = 0; i < cfg.count; ++i) {
    ManifestRow r;
    r.image = fmt::format("images/sample_{:05d}.png", i);
    r.split = static_cast<Split>(assignment[static_cast<std::size_t>(i)]);
    r.overall = labels[static_cast<std::size_t>(i)].overall;
    for (int j = 0; j < 3; ++j) r.details[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(i)].details[static_cast<std::size_t>(j)];
    rows.push_back(std::move(r));
  }
  write_manifest((fs::path(cfg.out_dir) / "manifest.csv").string(), rows);
  write_file_atomic((fs::path(cfg.out_dir) / "oracle.csv").string(), oracle.str());
}

}  // namespace fmtk
