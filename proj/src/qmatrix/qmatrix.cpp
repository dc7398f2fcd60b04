// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/qmatrix/qmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "qmap/common/error.hpp"

namespace qmap {
namespace {

struct Contribution {
  std::size_t cell;
  double value;
  bool operator<(const Contribution& o) const {
    return cell != o.cell ? cell < o.cell : value < o.value;
  }
};

// Sorting first makes the floating-point sums independent of input order.
void accumulate(std::vector<Contribution>& items, Qmatrix& out) {
  std::sort(items.begin(), items.end());
  auto values = out.mutable_values();
  auto counts = out.mutable_counts();
  for (const auto& c : items) {
    values[c.cell] += c.value;
    counts[c.cell] += 1.0;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (counts[i] > 0.0) values[i] /= counts[i];
  }
}

double signal_for(const QPoint& p, std::span<const double> signals) {
  if (p.signal_index >= signals.size()) {
    throw ShapeError("q-point refers to signal " + std::to_string(p.signal_index) + " of " +
                     std::to_string(signals.size()));
  }
  return signals[p.signal_index];
}

}  // namespace

std::string to_string(QmatrixVariant variant) {
  return variant == QmatrixVariant::k2d ? "2d" : "3d";
}

QmatrixVariant parse_qmatrix_variant(std::string_view text) {
  if (text == "2d" || text == "2D") return QmatrixVariant::k2d;
  if (text == "3d" || text == "3D") return QmatrixVariant::k3d;
  throw ConfigError("unknown Qmatrix variant '" + std::string(text) + "'");
}

std::size_t QmatrixConfig::channels() const {
  if (variant == QmatrixVariant::k3d) return 1;
  return per_shell ? 3 * expected_shells : 3;
}

std::size_t QmatrixConfig::cells_per_channel() const {
  const auto n = static_cast<std::size_t>(q_n);
  return variant == QmatrixVariant::k3d ? n * n * n : n * n;
}

void QmatrixConfig::validate() const {
  if (q_n < 1) throw ConfigError("q_n must be at least 1");
  if (!(b_norm > 0.0)) throw ConfigError("b_norm must be positive");
  if (per_shell && variant == QmatrixVariant::k3d) {
    throw ConfigError("per-shell channels are only defined for the 2D variant");
  }
  if (per_shell && expected_shells == 0) throw ConfigError("expected_shells must be positive");
}

Qmatrix::Qmatrix(const QmatrixConfig& config)
    : q_n_(config.q_n),
      variant_(config.variant),
      channels_(config.channels()),
      cells_(config.cells_per_channel()),
      values_(channels_ * cells_, 0.0),
      counts_(channels_ * cells_, 0.0) {
  config.validate();
}

double Qmatrix::at(std::size_t channel, int i, int j) const {
  return values_[(channel * static_cast<std::size_t>(q_n_) + static_cast<std::size_t>(i)) *
                     static_cast<std::size_t>(q_n_) +
                 static_cast<std::size_t>(j)];
}

double Qmatrix::count_at(std::size_t channel, int i, int j) const {
  return counts_[(channel * static_cast<std::size_t>(q_n_) + static_cast<std::size_t>(i)) *
                     static_cast<std::size_t>(q_n_) +
                 static_cast<std::size_t>(j)];
}

std::size_t Qmatrix::nonzero_count() const {
  return static_cast<std::size_t>(
      std::count_if(counts_.begin(), counts_.end(), [](double c) { return c > 0.0; }));
}

int bin_index(double coord, int q_n) {
  if (!(std::abs(coord) <= 1.0 + 1e-9)) {
    throw RangeError("q-space coordinate " + std::to_string(coord) + " outside [-1, 1]");
  }
  const int i = static_cast<int>(std::floor((coord + 1.0) / 2.0 * q_n));
  return std::clamp(i, 0, q_n - 1);
}

Qmatrix encode_2d(std::span<const QPoint> qpoints, std::span<const double> signals,
                  const QmatrixConfig& config, const ShellPartition* shells) {
  if (config.variant != QmatrixVariant::k2d) throw ConfigError("encode_2d needs the 2D variant");
  Qmatrix out(config);
  const auto n = static_cast<std::size_t>(config.q_n);

  std::vector<std::size_t> shell_of;
  if (config.per_shell) {
    if (shells == nullptr) throw ConfigError("per-shell encoding needs a shell partition");
    if (shells->size() != config.expected_shells) {
      throw ShapeError("per-shell encoding expects " + std::to_string(config.expected_shells) +
                       " shells, got " + std::to_string(shells->size()));
    }
    for (std::size_t s = 0; s < shells->size(); ++s) {
      for (std::size_t m : shells->shells[s].members) {
        if (m >= shell_of.size()) shell_of.resize(m + 1, shells->size());
        shell_of[m] = s;
      }
    }
  }

  // Planes xy, yz, xz: (first axis, second axis).
  constexpr int kPlanes[3][2] = {{0, 1}, {1, 2}, {0, 2}};
  std::vector<Contribution> items;
  items.reserve(qpoints.size() * 3);
  for (const auto& p : qpoints) {
    const double v = signal_for(p, signals);
    std::size_t base = 0;
    if (config.per_shell) {
      if (p.signal_index >= shell_of.size() || shell_of[p.signal_index] >= shells->size()) {
        throw ShapeError("signal " + std::to_string(p.signal_index) + " belongs to no shell");
      }
      base = 3 * shell_of[p.signal_index];
    }
    int idx[3];
    for (int a = 0; a < 3; ++a) idx[a] = bin_index(p.coords[a], config.q_n);
    for (std::size_t plane = 0; plane < 3; ++plane) {
      const auto i = static_cast<std::size_t>(idx[kPlanes[plane][0]]);
      const auto j = static_cast<std::size_t>(idx[kPlanes[plane][1]]);
      items.push_back({((base + plane) * n + i) * n + j, v});
    }
  }
  accumulate(items, out);
  return out;
}

Qmatrix encode_3d(std::span<const QPoint> qpoints, std::span<const double> signals,
                  const QmatrixConfig& config) {
  if (config.variant != QmatrixVariant::k3d) throw ConfigError("encode_3d needs the 3D variant");
  Qmatrix out(config);
  const auto n = static_cast<std::size_t>(config.q_n);
  std::vector<Contribution> items;
  items.reserve(qpoints.size());
  for (const auto& p : qpoints) {
    const double v = signal_for(p, signals);
    const auto x = static_cast<std::size_t>(bin_index(p.coords.x(), config.q_n));
    const auto y = static_cast<std::size_t>(bin_index(p.coords.y(), config.q_n));
    const auto z = static_cast<std::size_t>(bin_index(p.coords.z(), config.q_n));
    items.push_back({(x * n + y) * n + z, v});
  }
  accumulate(items, out);
  return out;
}

Qmatrix encode(const GradientScheme& scheme, std::span<const double> signals,
               const QmatrixConfig& config) {
  if (signals.size() != scheme.size()) {
    throw ShapeError("got " + std::to_string(signals.size()) + " signals for " +
                     std::to_string(scheme.size()) + " diffusion-weighted entries");
  }
  auto qpoints = normalize_qpoints(scheme, config.b_norm);
  if (config.mirror) {
    const std::size_t n = qpoints.size();
    for (std::size_t i = 0; i < n; ++i) {
      qpoints.push_back({-qpoints[i].coords, qpoints[i].signal_index});
    }
  }
  if (config.variant == QmatrixVariant::k3d) return encode_3d(qpoints, signals, config);
  if (config.per_shell) {
    const auto shells = group_shells(scheme);
    return encode_2d(qpoints, signals, config, &shells);
  }
  return encode_2d(qpoints, signals, config);
}

}  // namespace qmap
