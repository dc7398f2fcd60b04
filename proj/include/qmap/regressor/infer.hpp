// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qmap/fit/volume.hpp"
#include "qmap/regressor/network.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

// Encodes every masked voxel with the network's input encoding and runs the
// forward pass. Unmasked voxels are zero. ShapeError if the signal channel
// count differs from the scheme's DW entry count.
Volume infer_volume(Network& net, const Volume& signals, const GradientScheme& scheme,
                    const Volume* mask = nullptr);

}  // namespace qmap
