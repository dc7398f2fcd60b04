// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qmap/forward/models.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

struct DtiTensorFit {
  Eigen::Matrix3d tensor = Eigen::Matrix3d::Zero();  // mm^2/s
  double residual = 0.0;                             // RMSE of -ln S
};

// Ordinary least squares on -ln S_i = b_i g_i^T D g_i. DataError for a
// non-positive signal or a length mismatch, NumericalError for a degenerate
// design.
DtiTensorFit fit_dti_lls(std::span<const double> signals, const GradientScheme& scheme);

struct SymmetricEigen {
  std::array<double, 3> values{};  // descending
  Eigen::Matrix3d vectors = Eigen::Matrix3d::Identity();  // columns match values
};
SymmetricEigen eig_sym3(const Eigen::Matrix3d& d);

struct DtiScalars {
  double fa = 0.0;
  double md = 0.0;
  double ad = 0.0;
  double rd = 0.0;
};
// Eigenvalues in any order; negatives are clipped to zero.
DtiScalars dti_scalars(double l1, double l2, double l3);
DtiScalars dti_scalars(const Eigen::Matrix3d& tensor);

struct NoddiFitOptions {
  int grid_n = 21;            // points per parameter axis on [0, 1]
  std::size_t n_mu = 30;      // orientation candidates (hemisphere lattice)
  std::size_t starts = 3;     // best grid orientations refined independently
  int refine_sweeps = 50;
  double shrink = 0.5;
  double initial_step = 0.025;    // icvf, isovf, odi
  double initial_angle = 0.35;    // radians
  int polish_iterations = 30;     // Levenberg-Marquardt steps after the sweeps
};

struct NoddiFit {
  double icvf = 0.0;
  double isovf = 0.0;
  double odi = 0.0;
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  double objective = 0.0;                 // residual sum of squares
  std::vector<double> objective_history;  // grid best, then one entry per sweep / polish step
  bool icvf_unconstrained = false;        // signal is (almost) pure CSF
  bool odi_unconstrained = false;         // no intracellular signal to orient
};

// Grid search, compass-search sweeps, then a Levenberg-Marquardt polish. DataError unless the
// scheme has at least two shells.
NoddiFit fit_noddi(std::span<const double> signals, const GradientScheme& scheme,
                   const NoddiFitOptions& options = {});

// NODDI signal model evaluated for all entries of a scheme at once, using the
// Legendre-series form of the intracellular term. Remembers the series of the
// last odi, so it is not safe to share between threads.
class NoddiSignalModel {
 public:
  explicit NoddiSignalModel(const GradientScheme& scheme);

  // One predicted signal per DW entry.
  void predict(double icvf, double isovf, double odi, const Eigen::Vector3d& mu,
               std::span<double> out) const;

 private:
  void prepare(double odi) const;

  std::vector<double> b_;
  std::vector<Eigen::Vector3d> dirs_;
  std::vector<double> x_values_;      // distinct b * d_par
  std::vector<std::size_t> x_index_;  // per entry
  mutable double cached_odi_ = -1.0;
  mutable double tau1_ = 0.0;
  mutable std::optional<DispersedStickSeries> series_;
};

}  // namespace qmap
