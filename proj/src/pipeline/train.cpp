#include "fmtk/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/eval/metrics.hpp"

namespace fmtk {

void TrainConfig::validate() const {
  schedule.validate();
  if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (weights.lambda_a < 0 || weights.lambda_b < 0 || (weights.lambda_a == 0 && weights.lambda_b == 0)) {
    throw DataError("train config: bad loss weights");
  }
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"epochs", schedule.max_epochs},
          {"halve_at", schedule.halve_at},
          {"base_lr", schedule.base_lr},
          {"momentum", schedule.momentum},
          {"batch_size", batch_size},
          {"lambda_a", weights.lambda_a},
          {"lambda_b", weights.lambda_b},
          {"seed", seed},
          {"augment", augment},
          {"hard_pseudo", hard_pseudo},
          {"aug_bounds", aug_bounds.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.schedule.max_epochs = j.value("epochs", c.schedule.max_epochs);
  if (j.contains("halve_at")) c.schedule.halve_at = j.at("halve_at").get<std::vector<int>>();
  c.schedule.base_lr = j.value("base_lr", c.schedule.base_lr);
  c.schedule.momentum = j.value("momentum", c.schedule.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weights.lambda_a = j.value("lambda_a", c.weights.lambda_a);
  c.weights.lambda_b = j.value("lambda_b", c.weights.lambda_b);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  c.hard_pseudo = j.value("hard_pseudo", c.hard_pseudo);
  if (j.contains("aug_bounds")) c.aug_bounds = AugmentBounds::from_json(j.at("aug_bounds"));
  c.validate();
  return c;
}

nlohmann::ordered_json RunRecord::to_json() const {
  nlohmann::ordered_json eps;
  for (const auto& e : epochs) {
    eps.push_back({{"train_loss", e.train_loss}, {"val_metric", e.val_metric}, {"lr", e.lr}});
  }
  return {{"epochs", eps},
          {"best_epoch", best_epoch},
          {"best_val_metric", best_val_metric},
          {"checkpoint", checkpoint},
          {"augment_calls", augment_calls}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("train_loss").get<double>(), e.at("val_metric").get<double>(), e.at("lr").get<double>()});
  }
  r.best_epoch = j.at("best_epoch").get<int>();
  r.best_val_metric = j.at("best_val_metric").get<double>();
  r.checkpoint = j.value("checkpoint", "");
  r.augment_calls = j.value("augment_calls", int64_t{0});
  return r;
}

void RunRecord::save(const std::string& path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

namespace {

constexpr uint64_t kShuffleTag = 0x5bf7;
constexpr uint64_t kAugmentTag = 0xa06;

Tensor one_hot(const std::vector<int>& labels, const std::vector<int>& idx, int num_classes) {
  Tensor t({static_cast<int>(idx.size()), num_classes});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int c = labels[static_cast<std::size_t>(idx[i])];
    if (c < 0 || c >= num_classes) throw DataError(fmt::format("label {} outside [0,{})", c, num_classes));
    t.at({static_cast<int>(i), c}) = 1.0;
  }
  return t;
}

Tensor stack_images(const std::vector<Tensor>& images, const std::vector<int>& idx) {
  const auto& shape = images.front().shape();
  Tensor batch({static_cast<int>(idx.size()), shape[0], shape[1], shape[2]});
  const int64_t per = images.front().numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images[static_cast<std::size_t>(idx[i])].data(), per, batch.data() + static_cast<int64_t>(i) * per);
  }
  return batch;
}

// Validation metric at the checkpoint-selection point: macro F1 on
// overall quality for student models, mean per-detail F1 for the Teacher.
double validation_metric(Model& model, const SplitData& val, TaskMode mode, int batch_size) {
  if (mode == TaskMode::TeacherA) {
    const Tensor probs = predict_details(model, val, batch_size);
    Tensor truth({static_cast<int>(val.size()), 3});
    for (std::size_t i = 0; i < val.size(); ++i) {
      for (int j = 0; j < 3; ++j) truth.at({static_cast<int>(i), j}) = val.details[i][static_cast<std::size_t>(j)];
    }
    return detail_metrics(truth, probs, 0.5).mean_f1;
  }
  const std::vector<int> pred = predict_overall(model, val, batch_size);
  return classification_metrics(confusion_matrix(val.overall, pred, model.config().num_classes)).macro_f1;
}

}  // namespace

RunRecord train_model(Model& model, const SplitData& train, const SplitData& val,
                      const TrainConfig& cfg, TaskMode mode) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw DataError("train_model: empty train or validation split");
  const int C = model.config().num_classes;

  switch (mode) {
    case TaskMode::TeacherA:
      if (!model.has_head_a() || model.has_head_b()) throw DataError("train_model: Teacher mode needs a detail-head-only model");
      if (!train.has_details || !val.has_details) throw DataError("train_model: Teacher training needs detail labels");
      if (cfg.augment) throw DataError("train_model: Teacher training must not use augmentation");
      break;
    case TaskMode::SingleTaskB:
      if (!model.has_head_b() || model.has_head_a()) throw DataError("train_model: single-task mode needs a head-B-only model");
      if (!train.has_overall || !val.has_overall) throw DataError("train_model: overall labels required");
      break;
    case TaskMode::MultiTask:
      if (!model.has_head_a() || !model.has_head_b()) throw DataError("train_model: multi-task mode needs both heads");
      if (!train.has_overall || !val.has_overall) throw DataError("train_model: overall labels required");
      if (!train.has_pseudo && cfg.weights.lambda_a > 0) throw DataError("train_model: missing pseudo-labels");
      break;
  }

  // fixed per-sample target rows, assembled per batch below
  std::vector<std::array<double, 3>> task_a_targets(train.size());
  if (mode == TaskMode::TeacherA) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (int j = 0; j < 3; ++j) task_a_targets[i][static_cast<std::size_t>(j)] = train.details[i][static_cast<std::size_t>(j)];
    }
  } else if (mode == TaskMode::MultiTask && train.has_pseudo) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (int j = 0; j < 3; ++j) {
        const double p = train.pseudo[i][static_cast<std::size_t>(j)];
        task_a_targets[i][static_cast<std::size_t>(j)] = cfg.hard_pseudo ? (p >= 0.5 ? 1.0 : 0.0) : p;
      }
    }
  }

  RunRecord record;
  SgdState sgd;
  sgd.momentum = cfg.schedule.momentum;
  NamedParams params = model.trainable();

  std::map<std::string, Tensor> best_params;
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.schedule.max_epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.schedule, epoch);
    Rng shuffle_rng(Rng::mix(Rng::mix(cfg.seed, kShuffleTag), static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      const int n = static_cast<int>(idx.size());

      Tensor batch;
      if (cfg.augment) {
        std::vector<Tensor> augmented;
        augmented.reserve(idx.size());
        for (int i : idx) {
          Rng arng(Rng::mix(Rng::mix(cfg.seed, kAugmentTag),
                            Rng::mix(static_cast<uint64_t>(epoch), static_cast<uint64_t>(i))));
          augmented.push_back(apply_plan(train.images[static_cast<std::size_t>(i)], sample_plan(arng, cfg.aug_bounds)));
          ++record.augment_calls;
        }
        std::vector<int> local(idx.size());
        std::iota(local.begin(), local.end(), 0);
        batch = stack_images(augmented, local);
      } else {
        batch = stack_images(train.images, idx);
      }

      auto out = model.forward(batch);
      model.zero_grads();
      double batch_loss = 0.0;

      if (mode == TaskMode::SingleTaskB || mode == TaskMode::MultiTask) {
        const Tensor targets_b = one_hot(train.overall, idx, C);
        LossResult ce = ce_multiclass(targets_b, out.probs_b);
        std::optional<double> bce_value;
        Tensor d_probs_a;
        if (mode == TaskMode::MultiTask && cfg.weights.lambda_a > 0.0) {
          Tensor targets_a({n, 3});
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 3; ++j) {
              targets_a.at({i, j}) = task_a_targets[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])][static_cast<std::size_t>(j)];
            }
          }
          LossResult bce = bce_multilabel(targets_a, out.probs_a);
          bce_value = bce.value;
          d_probs_a = std::move(bce.d_probs);
          for (double& g : d_probs_a.values()) g *= cfg.weights.lambda_a;
        }
        batch_loss = mode == TaskMode::SingleTaskB
                         ? ce.value
                         : multitask_loss(cfg.weights, bce_value, ce.value);
        Tensor d_probs_b = std::move(ce.d_probs);
        if (mode == TaskMode::MultiTask) {
          for (double& g : d_probs_b.values()) g *= cfg.weights.lambda_b;
        }
        model.backward_heads(&d_probs_b, d_probs_a.empty() ? nullptr : &d_probs_a);
      } else {
        Tensor targets_a({n, 3});
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < 3; ++j) {
            targets_a.at({i, j}) = task_a_targets[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])][static_cast<std::size_t>(j)];
          }
        }
        LossResult bce = bce_multilabel(targets_a, out.probs_a);
        batch_loss = bce.value;
        model.backward_heads(nullptr, &bce.d_probs);
      }

      sgd_step(params, sgd, lr);
      loss_sum += batch_loss * n;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.lr = lr;
    stats.val_metric = validation_metric(model, val, mode, cfg.batch_size);
    record.epochs.push_back(stats);

    if (record.best_epoch < 0 || stats.val_metric > record.best_val_metric) {
      record.best_epoch = epoch;
      record.best_val_metric = stats.val_metric;
      best_params.clear();
      for (const auto& [name, t] : params) best_params.emplace(name, *t);
    }
  }

  // leave the model at the selected checkpoint
  for (auto& [name, t] : params) {
    auto it = best_params.find(name);
    if (it != best_params.end()) *t = it->second;
  }
  return record;
}

namespace {

template <typename Fn>
void forward_batches(Model& model, const SplitData& data, int batch_size, Fn&& consume) {
  std::vector<int> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
    auto out = model.forward(stack_images(data.images, idx));
    consume(start, out);
  }
}

}  // namespace

std::vector<int> predict_overall(Model& model, const SplitData& data, int batch_size) {
  if (!model.has_head_b()) throw DataError("predict_overall: model has no overall-quality head");
  std::vector<int> pred(data.size(), 0);
  const int C = model.config().num_classes;
  forward_batches(model, data, batch_size, [&](std::size_t start, const Model::Outputs& out) {
    for (int i = 0; i < out.probs_b.dim(0); ++i) {
      int best = 0;
      for (int c = 1; c < C; ++c) {
        if (out.probs_b.at({i, c}) > out.probs_b.at({i, best})) best = c;
      }
      pred[start + static_cast<std::size_t>(i)] = best;
    }
  });
  return pred;
}

Tensor predict_details(Model& model, const SplitData& data, int batch_size) {
  if (!model.has_head_a()) throw DataError("predict_details: model has no detail head");
  Tensor probs({static_cast<int>(data.size()), 3});
  forward_batches(model, data, batch_size, [&](std::size_t start, const Model::Outputs& out) {
    for (int i = 0; i < out.probs_a.dim(0); ++i) {
      for (int j = 0; j < 3; ++j) probs.at({static_cast<int>(start) + i, j}) = out.probs_a.at({i, j});
    }
  });
  return probs;
}

Tensor embed_split(Model& model, const SplitData& data, int batch_size) {
  Tensor z({static_cast<int>(data.size()), model.config().embed_dim});
  forward_batches(model, data, batch_size, [&](std::size_t start, const Model::Outputs& out) {
    for (int i = 0; i < out.z.dim(0); ++i) {
      for (int d = 0; d < model.config().embed_dim; ++d) z.at({static_cast<int>(start) + i, d}) = out.z.at({i, d});
    }
  });
  return z;
}

}  // namespace fmtk
