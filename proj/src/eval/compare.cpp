#include "fmtk/eval/compare.hpp"

#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fmtk/common/error.hpp"

namespace fmtk {

using ordered_json = nlohmann::ordered_json;

double replicate_macro_f1(const std::vector<int>& truth, const std::vector<int>& pred,
                          const std::vector<int>& idx, int num_classes) {
  std::vector<int> t, p;
  t.reserve(idx.size());
  p.reserve(idx.size());
  for (int i : idx) {
    t.push_back(truth[static_cast<std::size_t>(i)]);
    p.push_back(pred[static_cast<std::size_t>(i)]);
  }
  return classification_metrics(confusion_matrix(t, p, num_classes)).macro_f1;
}

namespace {

ordered_json report_json(const MetricsReport& r) {
  ordered_json j;
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["sample_count"] = r.sample_count;
  ordered_json per;
  for (const auto& c : r.per_class) {
    per.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  j["per_class"] = per;
  if (r.per_class.size() == 2) j["binary_f1_bad_positive"] = r.binary_f1;
  return j;
}

ordered_json cm_json(const ConfusionMatrix& cm) {
  ordered_json rows;
  const auto norm = cm.row_normalized();
  for (int t = 0; t < cm.num_classes; ++t) {
    ordered_json counts, normed;
    for (int p = 0; p < cm.num_classes; ++p) {
      counts.push_back(cm.at(t, p));
      normed.push_back(norm[static_cast<std::size_t>(t * cm.num_classes + p)]);
    }
    rows.push_back({{"counts", counts}, {"row_normalized", normed}});
  }
  return rows;
}

}  // namespace

ModelComparison compare_models(const std::string& name_a, const std::vector<int>& pred_a,
                               const std::string& name_b, const std::vector<int>& pred_b,
                               const std::vector<int>& truth, int num_classes,
                               const CompareOptions& opts) {
  if (pred_a.size() != truth.size() || pred_b.size() != truth.size()) {
    throw DataError(fmt::format("compare_models: prediction lengths ({}, {}) vs test set {}", pred_a.size(), pred_b.size(), truth.size()));
  }
  if (truth.empty()) throw DataError("compare_models: empty test set");

  ModelComparison c;
  c.name_a = name_a;
  c.name_b = name_b;
  c.cm_a = confusion_matrix(truth, pred_a, num_classes);
  c.cm_b = confusion_matrix(truth, pred_b, num_classes);
  c.metrics_a = classification_metrics(c.cm_a);
  c.metrics_b = classification_metrics(c.cm_b);
  for (int k = 0; k < num_classes; ++k) {
    c.per_class_f1_delta.push_back(c.metrics_a.per_class[static_cast<std::size_t>(k)].f1 -
                                   c.metrics_b.per_class[static_cast<std::size_t>(k)].f1);
  }
  c.macro_f1_delta = c.metrics_a.macro_f1 - c.metrics_b.macro_f1;

  const auto indices = bootstrap_indices(static_cast<int>(truth.size()), opts.b_resamples, opts.seed);
  std::vector<double> f1_a, f1_b;
  f1_a.reserve(indices.size());
  f1_b.reserve(indices.size());
  for (const auto& idx : indices) {
    f1_a.push_back(replicate_macro_f1(truth, pred_a, idx, num_classes));
    f1_b.push_back(replicate_macro_f1(truth, pred_b, idx, num_classes));
  }
  auto percentile_ci = [&](std::vector<double> stats, double point) {
    std::sort(stats.begin(), stats.end());
    auto order_stat = [&](double q) {
      int64_t k = static_cast<int64_t>(std::floor(q * static_cast<double>(stats.size())));
      k = std::clamp<int64_t>(k, 0, static_cast<int64_t>(stats.size()) - 1);
      return stats[static_cast<std::size_t>(k)];
    };
    return BootstrapCi{order_stat(opts.alpha / 2.0), order_stat(1.0 - opts.alpha / 2.0), point};
  };
  c.ci_a = percentile_ci(f1_a, c.metrics_a.macro_f1);
  c.ci_b = percentile_ci(f1_b, c.metrics_b.macro_f1);

  try {
    c.wilcoxon = wilcoxon_signed_rank(f1_a, f1_b, opts.tail);
  } catch (const DataError&) {
    // all replicate pairs identical: no evidence of any difference
    c.wilcoxon.test = "wilcoxon-signed-rank";
    c.wilcoxon.tail = opts.tail;
    c.wilcoxon.p_value = 1.0;
    c.wilcoxon.n_effective = 0;
    c.wilcoxon_degenerate = true;
  }
  return c;
}

ordered_json ModelComparison::to_json() const {
  ordered_json j;
  j["model_a"] = name_a;
  j["model_b"] = name_b;
  j["metrics_a"] = report_json(metrics_a);
  j["metrics_b"] = report_json(metrics_b);
  j["macro_f1_delta"] = macro_f1_delta;
  j["per_class_f1_delta"] = per_class_f1_delta;
  j["bootstrap_ci_a"] = {{"low", ci_a.low}, {"high", ci_a.high}, {"point", ci_a.point}};
  j["bootstrap_ci_b"] = {{"low", ci_b.low}, {"high", ci_b.high}, {"point", ci_b.point}};
  j["wilcoxon"] = {{"statistic", wilcoxon.statistic},
                   {"p_value", wilcoxon.p_value},
                   {"tail", wilcoxon.tail == Tail::One ? "one" : "two"},
                   {"n_effective", wilcoxon.n_effective},
                   {"degenerate", wilcoxon_degenerate}};
  j["confusion_a"] = cm_json(cm_a);
  j["confusion_b"] = cm_json(cm_b);
  j["conventions"] = "0/0 precision, recall and F1 are defined as 0; pairing unit for the "
                     "significance test is the shared bootstrap replicate of the test set; "
                     "zero effective pairs is reported as p = 1";
  return j;
}

std::string ModelComparison::to_text() const {
  std::ostringstream ss;
  ss << fmt::format("{:<24} {:>10} {:>10}\n", "", name_a, name_b);
  ss << fmt::format("{:<24} {:>10.4f} {:>10.4f}\n", "macro F1", metrics_a.macro_f1, metrics_b.macro_f1);
  ss << fmt::format("{:<24} {:>10.4f} {:>10.4f}\n", "accuracy", metrics_a.accuracy, metrics_b.accuracy);
  for (std::size_t k = 0; k < metrics_a.per_class.size(); ++k) {
    ss << fmt::format("{:<24} {:>10.4f} {:>10.4f}   (delta {:+.4f})\n", fmt::format("class {} F1", k),
                      metrics_a.per_class[k].f1, metrics_b.per_class[k].f1, per_class_f1_delta[k]);
  }
  ss << fmt::format("macro F1 95% CI          [{:.4f}, {:.4f}] vs [{:.4f}, {:.4f}]\n", ci_a.low, ci_a.high, ci_b.low, ci_b.high);
  ss << fmt::format("wilcoxon ({}-tailed)     W = {:.1f}, p = {:.6g}{}\n", wilcoxon.tail == Tail::One ? "one" : "two",
                    wilcoxon.statistic, wilcoxon.p_value, wilcoxon_degenerate ? " (degenerate: all replicate pairs equal)" : "");
  ss << "note: 0/0 precision/recall/F1 defined as 0; significance pairing unit = shared bootstrap replicates\n";
  return ss.str();
}

}  // namespace fmtk
