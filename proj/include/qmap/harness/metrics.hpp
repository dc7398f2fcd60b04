// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qmap {

// 100 * ||pred - ref|| / ||ref|| over the masked elements (all when the mask
// is empty). DataError if the mask selects nothing or the reference is zero
// there; ShapeError on length mismatches.
double nrmse(std::span<const double> pred, std::span<const double> ref,
             const std::vector<bool>& mask = {});

struct RankSumResult {
  double p = 1.0;          // two-sided
  double rank_sum = 0.0;   // of the first sample, midranks for ties
  bool exact = false;      // enumerated null distribution
  bool tie_fallback = false;  // small samples with ties: normal approximation used
};

// Wilcoxon rank-sum (Mann-Whitney) test. Exact null distribution when
// n + m <= 20 and there are no ties; otherwise the normal approximation with
// tie and continuity corrections. DataError if either sample is empty.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

// Null distribution of the rank sum of n items drawn from ranks 1..n+m:
// entry s is the number of subsets with sum s.
std::vector<double> rank_sum_counts(std::size_t n, std::size_t m);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};
MeanStd mean_std(std::span<const double> values);

}  // namespace qmap
