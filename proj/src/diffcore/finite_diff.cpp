#include "fmtk/diffcore/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

namespace {

double objective(Graph& g, const Tensor& input) {
  const Tensor& out = g.forward(input);
  double s = 0.0;
  for (double v : out.values()) s += v;
  return s;
}

}  // namespace

FiniteDiffReport finite_diff_check(Graph& graph, const Tensor& input, double eps) {
  if (!(eps > 0.0) || eps > 1e-3) {
    throw DataError(fmt::format("finite_diff_check: eps must be in (0, 1e-3], got {}", eps));
  }
  for (Tensor* p : graph.parameters()) {
    if (!p->all_finite()) throw DataError("finite_diff_check: non-finite parameter");
  }

  // Analytic gradients of sum(outputs).
  graph.zero_param_grads();
  const Tensor& out = graph.forward(input);
  graph.backward(Tensor::full(out.shape(), 1.0));

  std::vector<Tensor*> params = graph.parameters();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad());

  FiniteDiffReport report;
  graph.set_record_gates(true);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    for (int64_t i = 0; i < p->numel(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + eps;
      const double fp = objective(graph, input);
      const uint64_t sig_plus = graph.gate_signature();
      (*p)[i] = saved - eps;
      const double fm = objective(graph, input);
      const uint64_t sig_minus = graph.gate_signature();
      (*p)[i] = saved;
      if (sig_plus != sig_minus) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
    }
  }
  graph.set_record_gates(false);
  // leave caches consistent with unperturbed parameters
  graph.forward(input);
  return report;
}

}  // namespace fmtk
