#include "fmtk/pipeline/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/data/image_ops.hpp"
#include "fmtk/data/png_io.hpp"

namespace fs = std::filesystem;

namespace fmtk {

std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>>
resolve_train_val(const Dataset& ds, uint64_t seed) {
  auto train = ds.rows_for(Split::Train);
  auto val = ds.rows_for(Split::Val);
  if (!val.empty()) return {train, val};
  return split_holdout(train, 0.1, Rng::mix(seed, 0x601d));
}

TrainedModel train_teacher(const Dataset& s, const BackboneConfig& arch, TrainConfig cfg) {
  cfg.augment = false;  // Noisy-Student practice: the Teacher sees clean images
  auto [train_rows, val_rows] = resolve_train_val(s, cfg.seed);
  const SplitData train = load_rows(s, train_rows);
  const SplitData val = load_rows(s, val_rows);
  if (!train.has_details) throw DataError("train_teacher: the Teacher set lacks detail labels");
  TrainedModel out{Model::teacher(arch, cfg.seed), {}};
  out.record = train_model(out.model, train, val, cfg, TaskMode::TeacherA);
  return out;
}

void pseudo_label(Model& teacher, const Dataset& q, const std::string& out_manifest) {
  if (!teacher.has_head_a()) throw DataError("pseudo_label: model has no detail head");
  std::vector<std::string> unreadable;
  std::vector<ManifestRow> rows = q.rows;
  const std::string out_root = fs::path(out_manifest).parent_path().string();
  for (auto& row : rows) {
    Tensor img;
    try {
      img = read_png_rgb8(q.resolve(row.image));
    } catch (const DataError&) {
      unreadable.push_back(row.image);
      continue;
    }
    const Tensor input = preprocess(img, teacher.config().input_size);
    Tensor batch({1, input.dim(0), input.dim(1), 3}, input.values());
    const auto out = teacher.forward(batch);
    for (int j = 0; j < 3; ++j) row.pseudo[static_cast<std::size_t>(j)] = out.probs_a.at({0, j});
    if (out_root != q.root) {
      // keep image references valid from the new manifest's directory
      std::error_code ec;
      const fs::path rel = fs::relative(fs::path(q.resolve(row.image)), fs::path(out_root.empty() ? "." : out_root), ec);
      row.image = ec ? q.resolve(row.image) : rel.string();
    }
  }
  if (!unreadable.empty()) {
    std::string joined;
    for (const auto& p : unreadable) joined += (joined.empty() ? "" : ", ") + p;
    throw DataError(fmt::format("pseudo_label: unreadable images: {}", joined));
  }
  write_manifest(out_manifest, rows);
}

TrainedModel pretrain_student(const Dataset& q, const BackboneConfig& arch, TrainConfig cfg) {
  auto [train_rows, val_rows] = resolve_train_val(q, cfg.seed);
  const SplitData train = load_rows(q, train_rows);
  const SplitData val = load_rows(q, val_rows);
  TrainedModel out{Model::single_task(arch, cfg.seed), {}};
  out.record = train_model(out.model, train, val, cfg, TaskMode::SingleTaskB);
  return out;
}

TrainedModel finetune_multitask(const Model& st, const Dataset& q_prime, TrainConfig cfg) {
  if (st.has_head_a()) throw DataError("finetune_multitask: expected a single-task starting point");
  auto [train_rows, val_rows] = resolve_train_val(q_prime, cfg.seed);
  const SplitData train = load_rows(q_prime, train_rows);
  const SplitData val = load_rows(q_prime, val_rows);
  if (!train.has_pseudo && cfg.weights.lambda_a > 0.0) {
    throw DataError("finetune_multitask: manifest lacks pseudo-label columns");
  }
  TrainedModel out{st.clone(), {}};
  out.model.attach_head_a(Rng::mix(cfg.seed, 0xa11a));
  out.record = train_model(out.model, train, val, cfg, TaskMode::MultiTask);
  return out;
}

ExtendResult extend_st_baseline(const Model& st, double phase1_best_val_metric,
                                const Dataset& q, TrainConfig cfg) {
  if (st.has_head_a()) throw DataError("extend_st_baseline: expected a single-task model");
  auto [train_rows, val_rows] = resolve_train_val(q, cfg.seed);
  const SplitData train = load_rows(q, train_rows);
  const SplitData val = load_rows(q, val_rows);
  ExtendResult res{st.clone(), {}, false, phase1_best_val_metric};
  // the schedule restarts from its base rate for the extension phase
  res.record = train_model(res.model, train, val, cfg, TaskMode::SingleTaskB);
  if (res.record.best_val_metric > phase1_best_val_metric) {
    res.extension_won = true;
    res.combined_best_val_metric = res.record.best_val_metric;
  } else {
    // phase one wins: hand back the original parameters
    res.model = st.clone();
  }
  return res;
}

LambdaSweepResult tune_lambdas(const std::vector<double>& lambda_a_grid, const Model& st,
                               const Dataset& q_prime, TrainConfig cfg) {
  if (lambda_a_grid.empty()) throw DataError("tune_lambdas: empty grid");
  std::vector<double> grid = lambda_a_grid;
  std::sort(grid.begin(), grid.end());
  LambdaSweepResult res;
  res.lambda_b = cfg.weights.lambda_b;
  double best = -1.0;
  for (double la : grid) {
    TrainConfig point = cfg;
    point.weights.lambda_a = la;
    const TrainedModel run = finetune_multitask(st, q_prime, point);
    res.scores.emplace_back(la, run.record.best_val_metric);
    if (run.record.best_val_metric > best) {  // strict: ties keep the smaller lambda
      best = run.record.best_val_metric;
      res.lambda_a = la;
    }
  }
  return res;
}

}  // namespace fmtk
