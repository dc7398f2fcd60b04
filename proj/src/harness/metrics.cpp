// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qmap/common/error.hpp"

namespace qmap {

double nrmse(std::span<const double> pred, std::span<const double> ref,
             const std::vector<bool>& mask) {
  if (pred.size() != ref.size()) {
    throw ShapeError("nrmse: prediction has " + std::to_string(pred.size()) +
                     " values, reference " + std::to_string(ref.size()));
  }
  if (!mask.empty() && mask.size() != ref.size()) throw ShapeError("nrmse: mask length mismatch");
  double err = 0.0;
  double norm = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    err += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    norm += ref[i] * ref[i];
    ++used;
  }
  if (used == 0) throw DataError("nrmse: mask selects no elements");
  if (norm == 0.0) throw DataError("nrmse: reference is zero within the mask");
  return 100.0 * std::sqrt(err / norm);
}

std::vector<double> rank_sum_counts(std::size_t n, std::size_t m) {
  const std::size_t total = n + m;
  const std::size_t max_sum = total * (total + 1) / 2;
  // ways[k][s]: subsets of size k with rank sum s, over the ranks seen so far.
  std::vector<std::vector<double>> ways(n + 1, std::vector<double>(max_sum + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t r = 1; r <= total; ++r) {
    for (std::size_t k = std::min(r, n); k >= 1; --k) {
      for (std::size_t s = max_sum; s >= r; --s) ways[k][s] += ways[k - 1][s - r];
    }
  }
  return ways[n];
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("rank-sum test needs two non-empty samples");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t total = n + m;

  std::vector<std::pair<double, bool>> pooled;  // (value, from a)
  for (double v : a) pooled.emplace_back(v, true);
  for (double v : b) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  RankSumResult result;
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j < total && pooled[j].first == pooled[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const auto t = static_cast<double>(j - i);
    if (j - i > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) result.rank_sum += midrank;
    }
    i = j;
  }

  if (total <= 20 && !ties) {
    const auto counts = rank_sum_counts(n, m);
    const double all = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto w = static_cast<std::size_t>(std::llround(result.rank_sum));
    double lower = 0.0;
    double upper = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (s <= w) lower += counts[s];
      if (s >= w) upper += counts[s];
    }
    result.exact = true;
    result.p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    return result;
  }

  result.tie_fallback = total <= 20 && ties;
  const auto nd = static_cast<double>(n);
  const auto md = static_cast<double>(m);
  const auto td = static_cast<double>(total);
  const double mean = nd * (td + 1.0) / 2.0;
  const double var = nd * md / 12.0 * ((td + 1.0) - tie_term / (td * (td - 1.0)));
  if (var <= 0.0) {
    result.p = 1.0;
    return result;
  }
  const double z = std::max(0.0, std::abs(result.rank_sum - mean) - 0.5) / std::sqrt(var);
  result.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

}  // namespace qmap
