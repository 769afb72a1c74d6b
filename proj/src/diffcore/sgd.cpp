#include "fmtk/diffcore/sgd.hpp"

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

void sgd_step(const NamedParams& params, SgdState& state, double lr) {
  if (!(lr > 0.0)) throw DataError(fmt::format("sgd_step: lr must be > 0, got {}", lr));
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) throw DataError(fmt::format("sgd_step: parameter '{}' has no gradient", name));
    const std::vector<double>& g = p->grad();
    std::vector<double>& v = state.velocity[name];
    if (v.empty()) v.assign(g.size(), 0.0);
    if (v.size() != g.size()) {
      throw DataError(fmt::format("sgd_step: velocity size {} vs parameter size {} for '{}'", v.size(), g.size(), name));
    }
    double* pd = p->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      pd[i] -= lr * v[i];
    }
  }
  state.lr = lr;
}

}  // namespace fmtk
