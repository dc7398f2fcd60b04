// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <utility>

#include "qmap/common/rng.hpp"
#include "qmap/forward/models.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct CountRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

struct DtiPrior {
  double d_max = kMaxDiffusivity;
  Range b{600.0, 1300.0};
  CountRange n{30, 80};
  std::size_t n_b0 = 1;
};

struct NoddiPrior {
  std::array<Range, 3> b{Range{200.0, 400.0}, Range{500.0, 900.0}, Range{1700.0, 2300.0}};
  std::array<CountRange, 3> n{CountRange{5, 10}, CountRange{25, 50}, CountRange{50, 100}};
  std::size_t n_b0 = 1;
};

// d1 ~ U(0, d_max), d2, d3 ~ U(0, d1); e1 uniform on the sphere and (e2, e3)
// a random completion of the triad.
DtiGroundTruth sample_dti_tensor(Rng& rng, double d_max = kMaxDiffusivity);

// icvf, isovf, odi ~ U(0, 1); mu uniform on the sphere.
NoddiGroundTruth sample_noddi_parameters(Rng& rng);

// Single shell, b ~ U(prior.b), n ~ U{prior.n}, quasi-uniform directions.
GradientScheme sample_dti_scheme(Rng& rng, const DtiPrior& prior = {});

// Three shells drawn independently from the per-shell ranges.
GradientScheme sample_noddi_scheme(Rng& rng, const NoddiPrior& prior = {});

std::pair<DtiGroundTruth, GradientScheme> sample_dti_truth(Rng& rng, const DtiPrior& prior = {});
std::pair<NoddiGroundTruth, GradientScheme> sample_noddi_truth(Rng& rng,
                                                                const NoddiPrior& prior = {});

}  // namespace qmap
