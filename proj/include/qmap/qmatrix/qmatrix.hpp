// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qmap/scheme/scheme.hpp"

namespace qmap {

enum class QmatrixVariant { k2d, k3d };

std::string to_string(QmatrixVariant variant);
QmatrixVariant parse_qmatrix_variant(std::string_view text);  // "2d" | "3d"

struct QmatrixConfig {
  int q_n = 20;
  QmatrixVariant variant = QmatrixVariant::k2d;
  double b_norm = 1300.0;
  bool per_shell = false;
  std::size_t expected_shells = 3;  // per_shell only
  bool mirror = false;              // also place each signal at the antipodal q-point

  static QmatrixConfig dti() { return {}; }
  static QmatrixConfig noddi() {
    QmatrixConfig c;
    c.b_norm = 2300.0;
    c.per_shell = true;
    return c;
  }

  std::size_t channels() const;
  // Spatial extent per channel: q_n^2 (2D) or q_n^3 (3D).
  std::size_t cells_per_channel() const;
  void validate() const;  // ConfigError
};

// Dense binned q-space tensor, channel-major. 2D: channel c, bin (i, j) at
// (c * q_n + i) * q_n + j with channels [xy, yz, xz] per shell. 3D: a single
// channel, cell (x, y, z) at (x * q_n + y) * q_n + z.
class Qmatrix {
 public:
  Qmatrix() = default;
  explicit Qmatrix(const QmatrixConfig& config);

  int q_n() const { return q_n_; }
  QmatrixVariant variant() const { return variant_; }
  std::size_t channels() const { return channels_; }
  std::size_t cells_per_channel() const { return cells_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<const double> counts() const { return counts_; }
  std::span<double> mutable_values() { return values_; }
  std::span<double> mutable_counts() { return counts_; }

  // 2D: (channel, i, j). 3D: (x, y, z).
  double at(std::size_t channel, int i, int j) const;
  double count_at(std::size_t channel, int i, int j) const;

  std::size_t nonzero_count() const;

  friend bool operator==(const Qmatrix&, const Qmatrix&) = default;

 private:
  int q_n_ = 0;
  QmatrixVariant variant_ = QmatrixVariant::k2d;
  std::size_t channels_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> values_;
  std::vector<double> counts_;
};

// floor((coord + 1) / 2 * q_n), with coord = +1 mapped to q_n - 1.
// RangeError if |coord| > 1.
int bin_index(double coord, int q_n);

// `signals[p.signal_index]` is the value at q-point p. Bins hold the mean of
// the signals that land in them; empty bins are 0. Per-shell mode requires
// `shells` and exactly cfg.expected_shells shells (ShapeError otherwise).
Qmatrix encode_2d(std::span<const QPoint> qpoints, std::span<const double> signals,
                  const QmatrixConfig& config, const ShellPartition* shells = nullptr);
Qmatrix encode_3d(std::span<const QPoint> qpoints, std::span<const double> signals,
                  const QmatrixConfig& config);

// Normalizes the scheme, adds antipodal copies when cfg.mirror is set, groups
// shells when needed and dispatches on the variant. `signals` are aligned with
// the scheme's DW entries.
Qmatrix encode(const GradientScheme& scheme, std::span<const double> signals,
               const QmatrixConfig& config);

}  // namespace qmap
