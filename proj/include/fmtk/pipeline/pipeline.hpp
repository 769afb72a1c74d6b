#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fmtk/pipeline/train.hpp"

namespace fmtk {

struct TrainedModel {
  Model model;
  RunRecord record;
};

// Step 1: multilabel Teacher on the detail-labeled set S. Augmentation is
// forced off. Selection: mean of the three per-detail F1 scores on the
// validation rows (S's val split, or a stratified 10% holdout when S has
// none).
TrainedModel train_teacher(const Dataset& s, const BackboneConfig& arch, TrainConfig cfg);

// Step 2: writes the label-augmented manifest: every row of q (all
// splits) gains p_illum/p_clarity/p_contrast from the Teacher's sigmoid
// outputs; everything else is copied through.
void pseudo_label(Model& teacher, const Dataset& q, const std::string& out_manifest);

// Step 3: single-task pre-training for overall quality on Q.
TrainedModel pretrain_student(const Dataset& q, const BackboneConfig& arch, TrainConfig cfg);

// Step 4: attaches a fresh detail head to a copy of the single-task
// model and optimizes the weighted two-task objective on Q'. The input
// model is never written to.
TrainedModel finetune_multitask(const Model& st, const Dataset& q_prime, TrainConfig cfg);

// Fairness control: continues single-task training for another full
// schedule (learning rate restarting from its base) and reports the best
// checkpoint across both phases.
struct ExtendResult {
  Model model;              // best across both phases
  RunRecord record;         // the extension phase
  bool extension_won = false;
  double combined_best_val_metric = 0.0;
};
ExtendResult extend_st_baseline(const Model& st, double phase1_best_val_metric,
                                const Dataset& q, TrainConfig cfg);

// Grid search over lambda_A (lambda_B pinned) by validation macro F1,
// ties resolved toward the smaller lambda_A.
struct LambdaSweepResult {
  double lambda_a = 1.0;
  double lambda_b = 1.0;
  std::vector<std::pair<double, double>> scores;  // (lambda_a, best val F1)
};
LambdaSweepResult tune_lambdas(const std::vector<double>& lambda_a_grid, const Model& st,
                               const Dataset& q_prime, TrainConfig cfg);

// Train/val resolution: a dataset with val rows uses them; otherwise a
// stratified 10% holdout of the train rows (seeded).
std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>>
resolve_train_val(const Dataset& ds, uint64_t seed);

}  // namespace fmtk
