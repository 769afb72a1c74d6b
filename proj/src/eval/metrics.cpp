#include "fmtk/eval/metrics.hpp"

#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

int64_t ConfusionMatrix::support(int cls) const {
  int64_t t = 0;
  for (int p = 0; p < num_classes; ++p) t += at(cls, p);
  return t;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (int t = 0; t < num_classes; ++t) {
    const int64_t s = support(t);
    if (s == 0) continue;
    for (int p = 0; p < num_classes; ++p) {
      out[static_cast<std::size_t>(t * num_classes + p)] = static_cast<double>(at(t, p)) / static_cast<double>(s);
    }
  }
  return out;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream ss;
  for (int t = 0; t < num_classes; ++t) {
    for (int p = 0; p < num_classes; ++p) {
      if (p) ss << ",";
      ss << at(t, p);
    }
    ss << "\n";
  }
  return ss.str();
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred, int num_classes) {
  if (truth.size() != pred.size()) {
    throw DataError(fmt::format("confusion_matrix: {} truth vs {} predicted labels", truth.size(), pred.size()));
  }
  if (num_classes < 2) throw DataError("confusion_matrix: need at least 2 classes");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
      throw DataError(fmt::format("confusion_matrix: label out of range at index {} (truth {}, pred {})", i, truth[i], pred[i]));
    }
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

namespace {

ClassMetrics one_vs_all(int64_t tp, int64_t fp, int64_t fn, int64_t support) {
  ClassMetrics m;
  m.support = support;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

}  // namespace

MetricsReport classification_metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.sample_count = cm.total();
  int64_t diag = 0;
  for (int c = 0; c < cm.num_classes; ++c) {
    const int64_t tp = cm.at(c, c);
    diag += tp;
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < cm.num_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    r.per_class.push_back(one_vs_all(tp, fp, fn, cm.support(c)));
    r.macro_f1 += r.per_class.back().f1;
  }
  r.macro_f1 /= static_cast<double>(cm.num_classes);
  r.accuracy = r.sample_count > 0 ? static_cast<double>(diag) / static_cast<double>(r.sample_count) : 0.0;
  if (cm.num_classes == 2) r.binary_f1 = r.per_class[0].f1;
  return r;
}

DetailMetricsReport detail_metrics(const Tensor& truth, const Tensor& probs, double threshold) {
  if (!truth.same_shape(probs) || truth.rank() != 2 || truth.dim(1) != 3) {
    throw DataError(fmt::format("detail_metrics: expected matching (N,3) tensors, got {} and {}", shape_str(truth.shape()), shape_str(probs.shape())));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw DataError("detail_metrics: threshold must be in (0,1)");
  const int64_t n = truth.dim(0);
  DetailMetricsReport r;
  r.threshold = threshold;
  r.sample_count = n;
  for (int j = 0; j < 3; ++j) {
    int64_t tp = 0, fp = 0, fn = 0, support = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double y = truth[i * 3 + j];
      if (y != 0.0 && y != 1.0) throw DataError("detail_metrics: truth must be binary");
      const bool good = y == 1.0;  // GOOD is the positive class
      const bool pred_good = probs[i * 3 + j] >= threshold;
      if (good) ++support;
      if (pred_good && good) ++tp;
      if (pred_good && !good) ++fp;
      if (!pred_good && good) ++fn;
    }
    r.per_detail[static_cast<std::size_t>(j)] = one_vs_all(tp, fp, fn, support);
    r.mean_f1 += r.per_detail[static_cast<std::size_t>(j)].f1;
  }
  r.mean_f1 /= 3.0;
  return r;
}

}  // namespace fmtk
