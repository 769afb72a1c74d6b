#include "fmtk/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

void Schedule::validate() const {
  if (!(base_lr > 0.0)) throw DataError("schedule: base_lr must be > 0");
  if (max_epochs < 1) throw DataError("schedule: max_epochs must be >= 1");
  for (std::size_t i = 0; i < halve_at.size(); ++i) {
    if (halve_at[i] >= max_epochs) throw DataError(fmt::format("schedule: halving epoch {} >= max_epochs {}", halve_at[i], max_epochs));
    if (i > 0 && halve_at[i] <= halve_at[i - 1]) throw DataError("schedule: halving epochs must be strictly increasing");
    if (halve_at[i] <= 0) throw DataError("schedule: halving epochs must be positive");
  }
}

Schedule Schedule::shortened(int epochs) {
  Schedule full;
  Schedule s;
  s.max_epochs = epochs;
  s.halve_at.clear();
  for (int h : full.halve_at) {
    const int scaled = static_cast<int>(std::lround(static_cast<double>(h) * epochs / full.max_epochs));
    if (scaled > 0 && scaled < epochs && (s.halve_at.empty() || scaled > s.halve_at.back())) {
      s.halve_at.push_back(scaled);
    }
  }
  s.validate();
  return s;
}

double lr_at_epoch(const Schedule& s, int epoch) {
  s.validate();
  if (epoch < 0 || epoch >= s.max_epochs) {
    throw DataError(fmt::format("lr_at_epoch: epoch {} outside [0, {})", epoch, s.max_epochs));
  }
  int halvings = 0;
  for (int h : s.halve_at) {
    if (h <= epoch) ++halvings;
  }
  return s.base_lr * std::pow(2.0, -halvings);
}

namespace {

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DataError(fmt::format("{}: targets {} vs probs {}", what, shape_str(a.shape()), shape_str(b.shape())));
  }
}

}  // namespace

LossResult bce_multilabel(const Tensor& targets, const Tensor& probs) {
  check_same_shape(targets, probs, "bce_multilabel");
  if (targets.rank() != 2) throw DataError("bce_multilabel: expected (N,k) tensors");
  const int64_t n = targets.dim(0);
  const int64_t total = targets.numel();
  LossResult r;
  r.d_probs = Tensor(probs.shape());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < total; ++i) {
    const double y = targets[i];
    if (y < 0.0 || y > 1.0) throw DataError(fmt::format("bce_multilabel: target {} outside [0,1]", y));
    const double p = clamp_prob(probs[i]);
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.d_probs[i] = -inv_n * (y / p - (1.0 - y) / (1.0 - p));
  }
  r.value = loss * inv_n;
  return r;
}

LossResult ce_multiclass(const Tensor& targets_onehot, const Tensor& probs) {
  check_same_shape(targets_onehot, probs, "ce_multiclass");
  if (targets_onehot.rank() != 2) throw DataError("ce_multiclass: expected (N,C) tensors");
  const int64_t n = targets_onehot.dim(0);
  const int C = targets_onehot.dim(1);
  LossResult r;
  r.d_probs = Tensor(probs.shape());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t b = 0; b < n; ++b) {
    int ones = 0;
    for (int c = 0; c < C; ++c) {
      const double y = targets_onehot.values()[static_cast<std::size_t>(b * C + c)];
      if (y == 1.0) {
        ++ones;
      } else if (y != 0.0) {
        throw DataError(fmt::format("ce_multiclass: row {} is not one-hot", b));
      }
    }
    if (ones != 1) throw DataError(fmt::format("ce_multiclass: row {} is not one-hot", b));
    for (int c = 0; c < C; ++c) {
      const int64_t i = b * C + c;
      const double y = targets_onehot[i];
      if (y == 1.0) {
        const double p = clamp_prob(probs[i]);
        loss -= std::log(p);
        r.d_probs[i] = -inv_n * (1.0 / p);
      }
    }
  }
  r.value = loss * inv_n;
  return r;
}

double multitask_loss(const LossWeights& w, std::optional<double> bce, double ce) {
  if (w.lambda_a < 0.0 || w.lambda_b < 0.0) throw DataError("multitask_loss: negative weight");
  if (w.lambda_a == 0.0 && w.lambda_b == 0.0) throw DataError("multitask_loss: both weights zero");
  if (w.lambda_a > 0.0 && !bce.has_value()) {
    throw DataError("multitask_loss: lambda_a > 0 but no bce term");
  }
  return w.lambda_a * bce.value_or(0.0) + w.lambda_b * ce;
}

}  // namespace fmtk
