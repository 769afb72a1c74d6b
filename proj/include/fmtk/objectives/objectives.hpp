#pragma once

#include <optional>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

struct LossWeights {
  double lambda_a = 1.0;
  double lambda_b = 1.0;
};

// Step schedule: base rate halved at each listed epoch, momentum fixed.
struct Schedule {
  double base_lr = 0.01;
  std::vector<int> halve_at = {30, 60, 80};
  int max_epochs = 115;
  double momentum = 0.9;

  void validate() const;
  // Rescales the halving epochs proportionally for a shortened run.
  static Schedule shortened(int epochs);
};

// Learning rate in effect for `epoch` (0-based). A halving takes effect
// at the listed epoch itself: epoch 29 -> 0.01, epoch 30 -> 0.005.
double lr_at_epoch(const Schedule& s, int epoch);

struct LossResult {
  double value = 0.0;
  Tensor d_probs;  // d loss / d probs, same shape as probs
};

// Multilabel binary cross-entropy, summed over the k detail tasks and
// averaged over the batch. Accepts soft targets (pseudo-labels).
// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
LossResult bce_multilabel(const Tensor& targets, const Tensor& probs);

// Multiclass cross-entropy over one-hot targets, averaged over the batch.
LossResult ce_multiclass(const Tensor& targets_onehot, const Tensor& probs);

// lambda_A * bce + lambda_B * ce. bce must be present whenever
// lambda_A > 0.
double multitask_loss(const LossWeights& w, std::optional<double> bce, double ce);

constexpr double kProbClamp = 1e-7;

}  // namespace fmtk
