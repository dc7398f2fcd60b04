// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "qmap/fit/fit.hpp"
#include "qmap/fit/volume.hpp"
#include "qmap/forward/dataset.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

struct PhantomConfig {
  ModelKind model = ModelKind::dti;
  std::array<std::size_t, 3> shape{16, 16, 4};
  std::optional<double> snr = 50.0;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  NoddiFitOptions noddi_fit{};
};

// Smooth synthetic parameter maps inside an elliptical mask, their signals
// under a scheme, and the conventional fit of those signals.
struct Phantom {
  Volume truth;      // label channels (FA, MD, AD, RD or ICVF, ISOVF, ODI)
  Volume signals;    // one channel per DW entry, S / S0 with noise
  Volume mask;       // 1 inside, 0 outside
  Volume reference;  // conventional fit of `signals`
};

// DTI: FA, MD fields set the eigenvalues, a smooth orientation field the
// eigenvectors. NODDI: smooth ICVF, ISOVF, ODI and mu fields. Signals are the
// analytic model plus complex Gaussian noise.
Phantom make_phantom(const GradientScheme& scheme, const PhantomConfig& config);

// Conventional voxelwise fit. Voxels outside the mask, or whose fit fails on
// non-positive signals, are zero.
Volume fit_volume(ModelKind model, const Volume& signals, const GradientScheme& scheme,
                  const Volume* mask = nullptr, const NoddiFitOptions& noddi = {},
                  std::size_t threads = 0);

}  // namespace qmap
