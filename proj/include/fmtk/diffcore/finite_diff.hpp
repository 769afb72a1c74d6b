#pragma once

#include "fmtk/diffcore/graph.hpp"
#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;  // coordinates excluded because perturbation crossed a kink
};

// Central-difference check of every parameter gradient against the
// analytic backward pass, using the scalar objective sum(outputs).
//
// Relative error per coordinate is |analytic - numeric| divided by
// max(|analytic|, |numeric|, 1e-12). Coordinates whose +/-eps perturbation
// flips any relu gate or maxpool winner are excluded from the maximum
// (the objective is non-smooth there and the comparison is meaningless);
// their count is reported instead.
FiniteDiffReport finite_diff_check(Graph& graph, const Tensor& input, double eps);

}  // namespace fmtk
