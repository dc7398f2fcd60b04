// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "qmap/common/rng.hpp"

namespace qmap {

// Diffusivities are in mm^2/s and b-values in s/mm^2 throughout.
inline constexpr double kMaxDiffusivity = 3.5e-3;
inline constexpr double kNoddiDPar = 1.7e-3;
inline constexpr double kNoddiDIso = 3.0e-3;

struct DtiGroundTruth {
  std::array<double, 3> d{0.0, 0.0, 0.0};
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();  // columns e1, e2, e3

  Eigen::Matrix3d tensor() const;
};

struct NoddiGroundTruth {
  double icvf = 0.0;
  double isovf = 0.0;
  double odi = 0.0;
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
};

using GroundTruth = std::variant<DtiGroundTruth, NoddiGroundTruth>;

double dti_signal(const DtiGroundTruth& truth, double b, const Eigen::Vector3d& g);

// kappa = 1 / tan(odi * pi / 2); odi = 0 gives +infinity, odi = 1 gives 0.
double odi_to_kappa(double odi);
double kappa_to_odi(double kappa);

// E[(mu . n)^2] under Watson(kappa), by adaptive Gauss-Kronrod quadrature.
double watson_tau1(double kappa);

// Draw from the Watson distribution with density proportional to
// exp(kappa (mu . n)^2).
Eigen::Vector3d watson_sample(Rng& rng, const Eigen::Vector3d& mu, double kappa);

// Quadrature rule for E[f(|t|)], t = mu . n under Watson(kappa). Gauss-Legendre
// panels on t in [0, 1], geometrically refined towards t = 1 where the density
// concentrates for large kappa. Weights sum to one.
class WatsonRule {
 public:
  explicit WatsonRule(double kappa);

  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

// Apparent extracellular tensor eigenvalues (axial along mu, radial).
struct ExtracellularDiffusivities {
  double axial = 0.0;
  double radial = 0.0;
};
ExtracellularDiffusivities noddi_extracellular(double icvf, double tau1);

inline constexpr int kMinSphereQuadratureOrder = 8;
inline constexpr int kDefaultSphereQuadratureOrder = 32;

// Normalized NODDI signal. The intracellular term is integrated over the
// sphere with a WatsonRule in the polar coordinate and `order` equispaced
// azimuthal nodes. Throws ConfigError for order < kMinSphereQuadratureOrder.
double noddi_signal(const NoddiGroundTruth& truth, double b, const Eigen::Vector3d& g,
                    int order = kDefaultSphereQuadratureOrder);

// Watson-dispersed stick attenuation expanded in even Legendre polynomials of
// cos(angle between gradient and mu). Equivalent to the sphere quadrature in
// noddi_signal but far cheaper when one kappa is evaluated for many
// gradients, which is what the NODDI fitter does.
class DispersedStickSeries {
 public:
  // `x_values` are the distinct b * d_par products the series is evaluated at.
  DispersedStickSeries(double kappa, std::span<const double> x_values);

  double attenuation(std::size_t x_index, double cos_angle) const;

  // Legendre coefficients of exp(-x t^2) for even degrees 0..2*(n-1).
  static std::vector<double> stick_coefficients(double x);
  // E[P_l(t)] for even l under Watson(kappa).
  static std::vector<double> watson_moments(double kappa, std::size_t count);

 private:
  bool aligned_ = false;  // kappa == infinity
  std::vector<double> x_values_;
  std::vector<std::vector<double>> coefficients_;  // per x: (2l+1)/2 * F_l * h_l
};

}  // namespace qmap
