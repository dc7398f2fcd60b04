// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qmap/common/rng.hpp"
#include "qmap/forward/models.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

inline constexpr double kProtonGamma = 2.675e8;  // rad s^-1 T^-1

// Random-walk PGSE simulation settings. Times in ms.
struct SimConfig {
  std::size_t n_protons = 10000;
  double dt = 0.2;
  double te = 72.0;
  double delta_small = 20.0;  // lobe duration
  double delta_big = 36.0;    // lobe separation (leading edge to leading edge)
  double gamma = kProtonGamma;
  std::optional<double> snr;  // none: noise-free
  std::size_t n_b0_average = 1;

  // Lobes centred in each half of the echo: delta = 20 ms, Delta = TE / 2.
  static SimConfig for_echo_time(double te_ms);
  static SimConfig dti() { return for_echo_time(72.0); }
  static SimConfig noddi() { return for_echo_time(95.0); }

  // Throws ConfigError on an inconsistent timing.
  void validate() const;
};

// Discretized gradient timing. The lobes sit symmetrically about TE / 2;
// the first lobe is +G, the second -G (effective spin-echo gradient).
class PgseSequence {
 public:
  explicit PgseSequence(const SimConfig& config);

  // Consecutive walk steps whose displacement enters the phase with the same
  // weight (seconds). Steps before the first lobe or after the second carry
  // zero weight and are omitted.
  struct Run {
    double weight = 0.0;
    std::size_t steps = 0;
  };
  const std::vector<Run>& runs() const { return runs_; }

  // Gradient amplitude (T/m) for b (s/mm^2): b = gamma^2 G^2 delta^2 (Delta - delta/3).
  double gradient_amplitude(double b) const;

  double step_seconds() const { return dt_; }

 private:
  double dt_ = 0.0;
  double gamma_ = 0.0;
  double delta_small_ = 0.0;
  double delta_big_ = 0.0;
  std::vector<Run> runs_;
};

struct SignalSet {
  std::vector<double> values;  // S / S0, aligned with the scheme's DW entries
};

// Noise-free complex mean magnetization for every DW entry.
std::vector<std::complex<double>> mc_simulate_complex(const GroundTruth& truth,
                                                      const GradientScheme& scheme,
                                                      const SimConfig& config, Rng& rng);

// Complex Gaussian noise with standard deviation 1/snr per channel.
std::complex<double> add_complex_noise(std::complex<double> value, double snr, Rng& rng);

// `count` b = 0 magnitudes simulated under the configured noise (all exactly 1
// without noise).
std::vector<double> simulate_b0(const SimConfig& config, std::size_t count, Rng& rng);

// Magnitudes after optional noise, divided by the averaged b = 0 magnitude.
SignalSet normalize_with_noise(std::span<const std::complex<double>> clean,
                               const SimConfig& config, Rng& rng);

// Full simulator: random walk, noise, b = 0 normalization.
SignalSet mc_simulate(const GroundTruth& truth, const GradientScheme& scheme,
                      const SimConfig& config, Rng& rng);

// Analytic counterpart (dti_signal / noddi_signal) with the same noise path.
SignalSet analytic_signals(const GroundTruth& truth, const GradientScheme& scheme,
                           const SimConfig& config, Rng& rng);

}  // namespace qmap
