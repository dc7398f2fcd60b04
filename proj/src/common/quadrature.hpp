// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <boost/math/special_functions/legendre.hpp>

namespace qmap::detail {

// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

template <unsigned N>
const GaussRule& gauss_legendre() {
  static const GaussRule rule = [] {
    GaussRule r;
    const auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(N));
    for (double z : zeros) {
      const double dp = boost::math::legendre_p_prime(static_cast<int>(N), z);
      const double w = 2.0 / ((1.0 - z * z) * dp * dp);
      r.x.push_back(z);
      r.w.push_back(w);
      if (z != 0.0) {
        r.x.push_back(-z);
        r.w.push_back(w);
      }
    }
    return r;
  }();
  return rule;
}

}  // namespace qmap::detail
