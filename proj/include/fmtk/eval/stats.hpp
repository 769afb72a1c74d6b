#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fmtk {

enum class Tail { One, Two };

struct StatTestResult {
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  Tail tail = Tail::Two;
  int n_effective = 0;
};

// Paired Wilcoxon signed-rank test on a - b.
//
// Zero differences are dropped; ties among |d| receive average ranks; the
// statistic is W = min(W+, W-). For n <= 12 effective pairs the p-value is
// exact, from enumerating all 2^n sign assignments; beyond that a normal
// approximation with tie correction and continuity correction is used.
// The one-tailed alternative is "a tends to exceed b".
// Fewer than 5 effective pairs is an error ("insufficient pairs").
StatTestResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b, Tail tail);

struct BootstrapCi {
  double low = 0.0;
  double high = 0.0;
  double point = 0.0;
};

// Percentile bootstrap over B seeded resamples with replacement. The
// interval endpoints are the order statistics at floor(q*B), clamped.
BootstrapCi bootstrap_ci(const std::vector<double>& samples,
                         const std::function<double(const std::vector<double>&)>& statistic,
                         int b_resamples, double alpha, uint64_t seed);

// Shared resample index sets so several models can be evaluated on the
// same bootstrap replicates (the pairing unit for significance tests).
std::vector<std::vector<int>> bootstrap_indices(int n, int b_resamples, uint64_t seed);

double median(std::vector<double> v);

}  // namespace fmtk
