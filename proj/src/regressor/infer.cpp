// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/regressor/infer.hpp"

#include "qmap/common/error.hpp"

namespace qmap {

Volume infer_volume(Network& net, const Volume& signals, const GradientScheme& scheme,
                    const Volume* mask) {
  signals.validate();
  if (signals.channels() != scheme.size()) {
    throw ShapeError("signal volume has " + std::to_string(signals.channels()) +
                     " channels but the scheme has " + std::to_string(scheme.size()) +
                     " diffusion-weighted entries");
  }
  const auto inside = mask_from(mask, signals.voxels());
  Volume out(signals.shape, label_names(net.spec().model), to_string(net.spec().model));

  constexpr std::size_t kChunk = 256;
  const std::size_t n_in = net.input_size();
  const std::size_t k = net.output_dim();
  std::vector<std::size_t> voxels;
  for (std::size_t v = 0; v < signals.voxels(); ++v) {
    if (inside[v]) voxels.push_back(v);
  }
  std::vector<double> s(scheme.size());
  std::vector<float> inputs;
  for (std::size_t start = 0; start < voxels.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, voxels.size() - start);
    inputs.assign(n * n_in, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = voxels[start + i];
      for (std::size_t j = 0; j < s.size(); ++j) s[j] = signals.at(v, j);
      encode_input(scheme, s, net.spec().encoding,
                   std::span<float>(inputs).subspan(i * n_in, n_in));
    }
    const auto pred = net.predict(inputs, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        out.at(voxels[start + i], c) = static_cast<float>(pred[i * k + c]);
      }
    }
  }
  return out;
}

}  // namespace qmap
