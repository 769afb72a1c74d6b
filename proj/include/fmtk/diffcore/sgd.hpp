#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Classic momentum:  v <- momentum * v + g;  p <- p - lr * v.
// Velocities are keyed by parameter name and created lazily at zero.
struct SgdState {
  double momentum = 0.9;
  double lr = 0.0;  // last learning rate applied
  std::map<std::string, std::vector<double>> velocity;
};

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Applies one update to every parameter. Every tensor must carry a
// populated gradient buffer; a missing one is an error.
void sgd_step(const NamedParams& params, SgdState& state, double lr);

}  // namespace fmtk
