#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmtk/eval/metrics.hpp"
#include "fmtk/eval/stats.hpp"

namespace fmtk {

struct CompareOptions {
  int b_resamples = 1000;
  double alpha = 0.05;
  Tail tail = Tail::Two;
  uint64_t seed = 17;
};

// Side-by-side evaluation of two models on the identical test set.
// Significance is computed over shared bootstrap replicates of the test
// set: every replicate is scored under both models and the per-replicate
// macro-F1 pairs feed a Wilcoxon signed-rank test. When the two models
// agree on every replicate the test has no nonzero differences; that case
// is reported as p = 1 (no evidence of a difference) rather than an error.
struct ModelComparison {
  std::string name_a;
  std::string name_b;
  MetricsReport metrics_a;
  MetricsReport metrics_b;
  ConfusionMatrix cm_a;
  ConfusionMatrix cm_b;
  std::vector<double> per_class_f1_delta;  // a - b
  double macro_f1_delta = 0.0;
  BootstrapCi ci_a;  // macro F1
  BootstrapCi ci_b;
  StatTestResult wilcoxon;
  bool wilcoxon_degenerate = false;  // all replicate differences were zero

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

ModelComparison compare_models(const std::string& name_a, const std::vector<int>& pred_a,
                               const std::string& name_b, const std::vector<int>& pred_b,
                               const std::vector<int>& truth, int num_classes,
                               const CompareOptions& opts = {});

// Macro F1 of a (truth, prediction) pairing restricted to `idx`.
double replicate_macro_f1(const std::vector<int>& truth, const std::vector<int>& pred,
                          const std::vector<int>& idx, int num_classes);

}  // namespace fmtk
