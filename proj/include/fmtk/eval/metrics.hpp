#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;  // num_classes x num_classes, row-major

  int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth * num_classes + pred)]; }
  int64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth * num_classes + pred)]; }
  int64_t total() const;
  int64_t support(int cls) const;
  // Rows sum to 1; an empty class yields an all-zero row.
  std::vector<double> row_normalized() const;
  std::string to_csv() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred, int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
};

// One-vs-all per-class metrics. 0/0 ratios are defined as 0 and still
// participate in the macro average.
struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  int64_t sample_count = 0;
  // Binary convention: class 0 (bad quality) is the positive class.
  double binary_f1 = 0.0;  // only meaningful when per_class.size() == 2
};

MetricsReport classification_metrics(const ConfusionMatrix& cm);

// Per-detail binary metrics at a probability threshold; prediction is
// positive (good, label 1) when p >= threshold.
struct DetailMetricsReport {
  std::array<ClassMetrics, 3> per_detail;
  double threshold = 0.5;
  int64_t sample_count = 0;
  double mean_f1 = 0.0;
};

DetailMetricsReport detail_metrics(const Tensor& truth, const Tensor& probs, double threshold = 0.5);

}  // namespace fmtk
