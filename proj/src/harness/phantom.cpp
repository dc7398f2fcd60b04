// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/harness/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "qmap/common/error.hpp"
#include "qmap/common/parallel.hpp"
#include "qmap/forward/models.hpp"
#include "qmap/forward/simulate.hpp"

namespace qmap {
namespace {

// Sum of a few random low-frequency plane waves, rescaled to [0, 1].
class SmoothField {
 public:
  SmoothField(Rng& rng, const std::array<std::size_t, 3>& shape) {
    for (int k = 0; k < kWaves; ++k) {
      for (int d = 0; d < 3; ++d) {
        const double extent = static_cast<double>(std::max<std::size_t>(shape[d], 1));
        freq_[k][d] = (uniform01(rng) * 2.0 - 1.0) * 1.5 * std::numbers::pi / extent;
      }
      phase_[k] = 2.0 * std::numbers::pi * uniform01(rng);
    }
  }

  double operator()(double x, double y, double z) const {
    double s = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      s += std::cos(freq_[k][0] * x + freq_[k][1] * y + freq_[k][2] * z + phase_[k]);
    }
    return 0.5 + 0.5 * s / kWaves;
  }

 private:
  static constexpr int kWaves = 4;
  double freq_[kWaves][3]{};
  double phase_[kWaves]{};
};

double lerp(double lo, double hi, double t) { return lo + (hi - lo) * std::clamp(t, 0.0, 1.0); }

Eigen::Vector3d orientation(double u, double v) {
  const double theta = std::numbers::pi * u;
  const double phi = 2.0 * std::numbers::pi * v;
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

}  // namespace

Volume fit_volume(ModelKind model, const Volume& signals, const GradientScheme& scheme,
                  const Volume* mask, const NoddiFitOptions& noddi, std::size_t threads) {
  signals.validate();
  if (signals.channels() != scheme.size()) {
    throw ShapeError("signal volume has " + std::to_string(signals.channels()) +
                     " channels but the scheme has " + std::to_string(scheme.size()) +
                     " diffusion-weighted entries");
  }
  if (model == ModelKind::noddi && group_shells(scheme).size() < 2) {
    throw DataError("NODDI fit needs at least two non-zero shells");
  }
  const auto inside = mask_from(mask, signals.voxels());
  Volume out(signals.shape, label_names(model), to_string(model));
  parallel_for(signals.voxels(), threads, [&](std::size_t v) {
    if (!inside[v]) return;
    std::vector<double> s(scheme.size());
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = signals.at(v, j);
    if (model == ModelKind::dti) {
      for (double x : s) {
        if (!(x > 0.0)) return;
      }
      const auto d = dti_scalars(fit_dti_lls(s, scheme).tensor);
      out.at(v, 0) = static_cast<float>(d.fa);
      out.at(v, 1) = static_cast<float>(d.md);
      out.at(v, 2) = static_cast<float>(d.ad);
      out.at(v, 3) = static_cast<float>(d.rd);
    } else {
      const auto f = fit_noddi(s, scheme, noddi);
      out.at(v, 0) = static_cast<float>(f.icvf);
      out.at(v, 1) = static_cast<float>(f.isovf);
      out.at(v, 2) = static_cast<float>(f.odi);
    }
  });
  return out;
}

Phantom make_phantom(const GradientScheme& scheme, const PhantomConfig& config) {
  Rng rng = make_rng(config.seed);
  const auto& shape = config.shape;
  std::array<SmoothField, 5> fields{SmoothField(rng, shape), SmoothField(rng, shape),
                                    SmoothField(rng, shape), SmoothField(rng, shape),
                                    SmoothField(rng, shape)};
  Phantom ph;
  ph.truth = Volume(shape, label_names(config.model), to_string(config.model));
  ph.signals = Volume(shape, signal_channel_names(scheme.size()), "signals");
  ph.mask = Volume(shape, {"mask"}, "mask");

  const double cx = (static_cast<double>(shape[0]) - 1.0) / 2.0;
  const double cy = (static_cast<double>(shape[1]) - 1.0) / 2.0;
  const double rx = std::max(0.45 * static_cast<double>(shape[0]), 0.5);
  const double ry = std::max(0.45 * static_cast<double>(shape[1]), 0.5);

  SimConfig sim;
  sim.snr = config.snr;
  const std::size_t n_vox = ph.signals.voxels();
  std::vector<GroundTruth> truths(n_vox);
  for (std::size_t v = 0; v < n_vox; ++v) {
    const double x = static_cast<double>(v % shape[0]);
    const double y = static_cast<double>((v / shape[0]) % shape[1]);
    const double z = static_cast<double>(v / (shape[0] * shape[1]));
    const double ex = (x - cx) / rx;
    const double ey = (y - cy) / ry;
    if (ex * ex + ey * ey > 1.0) continue;
    ph.mask.at(v, 0) = 1.0f;
    const double f0 = fields[0](x, y, z);
    const double f1 = fields[1](x, y, z);
    const double f2 = fields[2](x, y, z);
    const Eigen::Vector3d axis = orientation(fields[3](x, y, z), fields[4](x, y, z));
    if (config.model == ModelKind::dti) {
      const double fa = lerp(0.1, 0.8, f0);
      const double md = lerp(0.5e-3, 1.2e-3, f1);
      const double asym = lerp(0.0, 0.15, f2);
      const double a = fa * std::sqrt(3.0 / (9.0 - 6.0 * fa * fa));
      DtiGroundTruth t;
      t.d = {md * (1.0 + 2.0 * a), md * (1.0 - a) * (1.0 + asym), md * (1.0 - a) * (1.0 - asym)};
      const Eigen::Vector3d e2 = any_orthogonal(axis);
      t.axes.col(0) = axis;
      t.axes.col(1) = e2;
      t.axes.col(2) = axis.cross(e2);
      const auto s = dti_scalars(t.d[0], t.d[1], t.d[2]);
      ph.truth.at(v, 0) = static_cast<float>(s.fa);
      ph.truth.at(v, 1) = static_cast<float>(s.md);
      ph.truth.at(v, 2) = static_cast<float>(s.ad);
      ph.truth.at(v, 3) = static_cast<float>(s.rd);
      truths[v] = t;
    } else {
      NoddiGroundTruth t;
      t.icvf = lerp(0.2, 0.8, f0);
      t.isovf = lerp(0.0, 0.3, f1);
      t.odi = lerp(0.1, 0.6, f2);
      t.mu = axis;
      ph.truth.at(v, 0) = static_cast<float>(t.icvf);
      ph.truth.at(v, 1) = static_cast<float>(t.isovf);
      ph.truth.at(v, 2) = static_cast<float>(t.odi);
      truths[v] = t;
    }
  }

  parallel_for(n_vox, config.threads, [&](std::size_t v) {
    if (ph.mask.at(v, 0) == 0.0f) return;
    Rng voxel_rng = make_rng(config.seed, v + 1);
    const auto s = analytic_signals(truths[v], scheme, sim, voxel_rng);
    for (std::size_t j = 0; j < scheme.size(); ++j) {
      ph.signals.at(v, j) = static_cast<float>(s.values[j]);
    }
  });

  ph.reference = fit_volume(config.model, ph.signals, scheme, &ph.mask, config.noddi_fit,
                            config.threads);
  return ph;
}

}  // namespace qmap
