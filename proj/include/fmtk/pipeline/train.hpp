#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmtk/augment/augment.hpp"
#include "fmtk/data/manifest.hpp"
#include "fmtk/model/model.hpp"
#include "fmtk/objectives/objectives.hpp"

namespace fmtk {

struct TrainConfig {
  Schedule schedule;
  int batch_size = 32;
  LossWeights weights;
  uint64_t seed = 0;
  bool augment = true;
  bool hard_pseudo = false;  // threshold pseudo-labels at 0.5 instead of soft targets
  AugmentBounds aug_bounds;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  double train_loss = 0.0;
  double val_metric = 0.0;  // macro F1 (task B) or mean detail F1 (Teacher)
  double lr = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_metric = 0.0;
  std::string checkpoint;
  int64_t augment_calls = 0;

  nlohmann::ordered_json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
};

enum class TaskMode {
  TeacherA,     // multilabel detail head, BCE on hard detail labels
  SingleTaskB,  // softmax overall head, CE
  MultiTask,    // both heads, lambda_a * BCE(pseudo) + lambda_b * CE
};

// One full training run under the step schedule. Selection: the epoch
// maximizing the validation metric, earliest epoch on ties; the model is
// left holding the winning parameters. Deterministic in (config, data):
// shuffling and augmentation draw from per-(epoch, sample) streams.
RunRecord train_model(Model& model, const SplitData& train, const SplitData& val,
                      const TrainConfig& cfg, TaskMode mode);

// argmax class predictions over a split (no augmentation).
std::vector<int> predict_overall(Model& model, const SplitData& data, int batch_size = 64);
// (N,3) detail probabilities over a split.
Tensor predict_details(Model& model, const SplitData& data, int batch_size = 64);
// (N, embed_dim) shared embeddings over a split.
Tensor embed_split(Model& model, const SplitData& data, int batch_size = 64);

}  // namespace fmtk
