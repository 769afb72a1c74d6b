#include "fmtk/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/rng.hpp"

namespace fmtk {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Average ranks (1-based) of |d|, ties share the mean rank of their block.
std::vector<double> average_ranks(const std::vector<double>& abs_d) {
  const std::size_t n = abs_d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return abs_d[i] < abs_d[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

StatTestResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b, Tail tail) {
  if (a.size() != b.size()) {
    throw DataError(fmt::format("wilcoxon: sequence lengths differ ({} vs {})", a.size(), b.size()));
  }
  std::vector<double> d;
  d.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  const int n = static_cast<int>(d.size());
  if (n < 5) {
    throw DataError(fmt::format("wilcoxon: insufficient pairs ({} nonzero differences, need >= 5)", n));
  }

  std::vector<double> abs_d(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) abs_d[i] = std::abs(d[i]);
  const std::vector<double> ranks = average_ranks(abs_d);

  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) w_plus += ranks[i];
    else w_minus += ranks[i];
  }
  const double w_total = w_plus + w_minus;
  const double w = std::min(w_plus, w_minus);

  StatTestResult r;
  r.test = "wilcoxon-signed-rank";
  r.statistic = w;
  r.tail = tail;
  r.n_effective = n;

  if (n <= 12) {
    // exact null: every sign assignment of the (tied) ranks equally likely
    const uint64_t total = 1ull << n;
    uint64_t count = 0;
    for (uint64_t mask = 0; mask < total; ++mask) {
      double wp = 0.0;
      for (int i = 0; i < n; ++i) {
        if (mask & (1ull << i)) wp += ranks[static_cast<std::size_t>(i)];
      }
      const double wm = w_total - wp;
      const double eps = 1e-9;
      if (tail == Tail::One) {
        if (wm <= w_minus + eps) ++count;
      } else {
        if (std::min(wp, wm) <= w + eps) ++count;
      }
    }
    r.p_value = static_cast<double>(count) / static_cast<double>(total);
  } else {
    const double mean = static_cast<double>(n) * (n + 1) / 4.0;
    double tie_term = 0.0;
    {
      std::vector<double> sorted = abs_d;
      std::sort(sorted.begin(), sorted.end());
      std::size_t i = 0;
      while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
      }
    }
    const double var = static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    if (tail == Tail::One) {
      const double z = (w_minus - mean + 0.5) / sd;
      r.p_value = normal_cdf(z);
    } else {
      const double z = (w - mean + 0.5) / sd;
      r.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    }
  }
  return r;
}

std::vector<std::vector<int>> bootstrap_indices(int n, int b_resamples, uint64_t seed) {
  if (n <= 0) throw DataError("bootstrap_indices: empty sample");
  std::vector<std::vector<int>> out(static_cast<std::size_t>(b_resamples));
  for (int b = 0; b < b_resamples; ++b) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(b)));
    auto& idx = out[static_cast<std::size_t>(b)];
    idx.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
  }
  return out;
}

BootstrapCi bootstrap_ci(const std::vector<double>& samples,
                         const std::function<double(const std::vector<double>&)>& statistic,
                         int b_resamples, double alpha, uint64_t seed) {
  if (samples.empty()) throw DataError("bootstrap_ci: empty input");
  if (b_resamples < 100) throw DataError("bootstrap_ci: B must be >= 100");
  if (!(alpha > 0.0 && alpha < 0.5)) throw DataError("bootstrap_ci: alpha must be in (0, 0.5)");

  const auto indices = bootstrap_indices(static_cast<int>(samples.size()), b_resamples, seed);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(b_resamples));
  std::vector<double> resampled(samples.size());
  for (const auto& idx : indices) {
    for (std::size_t i = 0; i < idx.size(); ++i) resampled[i] = samples[static_cast<std::size_t>(idx[i])];
    stats.push_back(statistic(resampled));
  }
  std::sort(stats.begin(), stats.end());
  auto order_stat = [&](double q) {
    int64_t k = static_cast<int64_t>(std::floor(q * b_resamples));
    k = std::clamp<int64_t>(k, 0, b_resamples - 1);
    return stats[static_cast<std::size_t>(k)];
  };
  BootstrapCi ci;
  ci.low = order_stat(alpha / 2.0);
  ci.high = order_stat(1.0 - alpha / 2.0);
  ci.point = statistic(samples);
  return ci;
}

double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace fmtk
