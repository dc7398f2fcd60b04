// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "qmap/common/rng.hpp"

namespace qmap {

// One diffusion-weighted acquisition: b in s/mm^2, unit gradient direction.
struct Acquisition {
  double b = 0.0;
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
};

// Acquisition protocol. `entries()` holds the diffusion-weighted (b > 0)
// rows in acquisition order; b = 0 rows only contribute to `n_b0()`.
class GradientScheme {
 public:
  GradientScheme() = default;

  // Throws DataError when a direction is not unit length (1e-6), a b-value is
  // not positive, or there are no diffusion-weighted entries.
  GradientScheme(std::vector<Acquisition> entries, std::size_t n_b0);

  const std::vector<Acquisition>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t n_b0() const { return n_b0_; }
  const Acquisition& operator[](std::size_t i) const { return entries_[i]; }

  double max_b() const;

  // Scheme made of the given entries (indices into entries()), in that order.
  GradientScheme subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const GradientScheme& a, const GradientScheme& b);

 private:
  std::vector<Acquisition> entries_;
  std::size_t n_b0_ = 0;
};

// Scheme file: one `b gx gy gz` row per acquisition, `#` starts a comment,
// b = 0 rows may omit the vector. Directions are renormalized to unit length.
GradientScheme parse_scheme(std::string_view text);
GradientScheme load_scheme(const std::filesystem::path& path);
std::string format_scheme(const GradientScheme& scheme);

// Acquisition tables shipped with the library: "dti_a", "dti_b", "noddi_a",
// "noddi_b".
std::vector<std::string> builtin_scheme_names();
GradientScheme builtin_scheme(std::string_view name);

// Builtin name if it matches one, otherwise a path to a scheme file.
GradientScheme resolve_scheme(std::string_view name_or_path);

// Position of a diffusion-weighted signal in normalized q-space.
struct QPoint {
  Eigen::Vector3d coords = Eigen::Vector3d::Zero();
  std::size_t signal_index = 0;
};

// coords = sqrt(b / b_norm) * dir for every diffusion-weighted entry.
// Throws RangeError if any b exceeds b_norm, ConfigError if b_norm <= 0.
std::vector<QPoint> normalize_qpoints(const GradientScheme& scheme, double b_norm);

struct Shell {
  double b = 0.0;  // mean b-value of the members
  std::vector<std::size_t> members;
};

struct ShellPartition {
  std::vector<Shell> shells;  // ascending by b

  std::size_t size() const { return shells.size(); }
};

inline constexpr double kDefaultShellTolerance = 50.0;

ShellPartition group_shells(const GradientScheme& scheme,
                            double tolerance = kDefaultShellTolerance);

// Ratio of extreme singular values of the 6-column tensor design matrix.
// +infinity for rank-deficient designs (fewer than six usable directions,
// coplanar sets, ...).
double condition_number(const GradientScheme& scheme);
double condition_number(std::span<const Eigen::Vector3d> directions);

struct SubsetOptions {
  std::size_t n_candidates = 500;
  std::uint64_t seed = 0;
  double shell_tolerance = kDefaultShellTolerance;
};

// Draws `n_candidates` random selections of k_per_shell[s] directions from
// every shell s and keeps the one with the lowest condition number. Entries
// keep their original relative order. Throws DataError if a k exceeds its
// shell size.
GradientScheme select_subset(const GradientScheme& scheme,
                             std::span<const std::size_t> k_per_shell,
                             const SubsetOptions& options = {});
GradientScheme select_subset(const GradientScheme& scheme, std::size_t k,
                             const SubsetOptions& options = {});

// `n` axes spread evenly over the z >= 0 hemisphere (Fibonacci lattice).
std::vector<Eigen::Vector3d> hemisphere_directions(std::size_t n);

// Quasi-uniform direction set for synthetic schemes: hemisphere lattice under
// a random rotation; half of the sets additionally get random antipodal
// flips, so both one-sided and two-sided layouts occur.
std::vector<Eigen::Vector3d> random_scheme_directions(std::size_t n, Rng& rng);

}  // namespace qmap
