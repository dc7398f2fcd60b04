// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/forward/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "../common/quadrature.hpp"
#include "qmap/common/error.hpp"

namespace qmap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_fraction(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw RangeError(std::string(name) + " must lie in [0, 1], got " + std::to_string(value));
  }
}

// P_0..P_degree at x.
void legendre_all(double x, std::size_t degree, std::vector<double>& out) {
  out.resize(degree + 1);
  out[0] = 1.0;
  if (degree == 0) return;
  out[1] = x;
  for (std::size_t l = 1; l < degree; ++l) {
    const double dl = static_cast<double>(l);
    out[l + 1] = ((2.0 * dl + 1.0) * x * out[l] - dl * out[l - 1]) / (dl + 1.0);
  }
}

}  // namespace

Eigen::Matrix3d DtiGroundTruth::tensor() const {
  const Eigen::Vector3d diag(d[0], d[1], d[2]);
  return axes * diag.asDiagonal() * axes.transpose();
}

double dti_signal(const DtiGroundTruth& truth, double b, const Eigen::Vector3d& g) {
  const double adc = g.dot(truth.tensor() * g);
  return std::exp(-b * adc);
}

double odi_to_kappa(double odi) {
  check_fraction(odi, "ODI");
  if (odi == 0.0) return kInf;
  if (odi == 1.0) return 0.0;
  return 1.0 / std::tan(odi * std::numbers::pi / 2.0);
}

double kappa_to_odi(double kappa) {
  if (!(kappa >= 0.0)) throw RangeError("kappa must be non-negative");
  if (std::isinf(kappa)) return 0.0;
  return 2.0 / std::numbers::pi * std::atan2(1.0, kappa);
}

double watson_tau1(double kappa) {
  if (!(kappa >= 0.0)) throw RangeError("kappa must be non-negative");
  if (std::isinf(kappa)) return 1.0;
  // E[1 - t^2] ~ 1/kappa; the O(1/kappa^2) remainder is below double precision.
  if (kappa > 1e10) return 1.0 - 1.0 / kappa;

  using boost::math::quadrature::gauss_kronrod;
  // Shifted exponent keeps both integrals O(1/kappa) without overflow.
  auto density = [kappa](double t) { return std::exp(-kappa * (1.0 - t) * (1.0 + t)); };
  auto moment = [&](double t) { return t * t * density(t); };
  const double split = kappa > 30.0 ? 1.0 - 30.0 / kappa : 0.0;
  constexpr unsigned kDepth = 20;
  constexpr double kTol = 1e-14;
  double num = gauss_kronrod<double, 31>::integrate(moment, split, 1.0, kDepth, kTol);
  double den = gauss_kronrod<double, 31>::integrate(density, split, 1.0, kDepth, kTol);
  if (split > 0.0) {
    num += gauss_kronrod<double, 31>::integrate(moment, 0.0, split, kDepth, kTol);
    den += gauss_kronrod<double, 31>::integrate(density, 0.0, split, kDepth, kTol);
  }
  return num / den;
}

Eigen::Vector3d watson_sample(Rng& rng, const Eigen::Vector3d& mu, double kappa) {
  if (!(kappa >= 0.0)) throw RangeError("kappa must be non-negative");
  const Eigen::Vector3d axis = mu.normalized();
  const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  if (std::isinf(kappa)) return sign * axis;

  // |t| has density ~ exp(kappa t^2) on [0, 1]. Propose from the envelope
  // exp(kappa t) >= exp(kappa t^2) by inversion and accept with probability
  // exp(kappa t (t - 1)). Acceptance stays above ~1/2 for every kappa.
  double t = 0.0;
  if (kappa == 0.0) {
    t = uniform01(rng);
  } else {
    const double em1 = std::expm1(-kappa);
    while (true) {
      const double u = 1.0 - uniform01(rng);
      t = 1.0 + std::log1p((1.0 - u) * em1) / kappa;
      t = std::clamp(t, 0.0, 1.0);
      if (uniform01(rng) <= std::exp(kappa * t * (t - 1.0))) break;
    }
  }
  t *= sign;
  const double phi = 2.0 * std::numbers::pi * uniform01(rng);
  const Eigen::Vector3d e1 = any_orthogonal(axis);
  const Eigen::Vector3d e2 = axis.cross(e1);
  const double r = std::sqrt(std::max(0.0, 1.0 - t * t));
  return (t * axis + r * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized();
}

WatsonRule::WatsonRule(double kappa) {
  if (!(kappa >= 0.0)) throw RangeError("kappa must be non-negative");
  if (std::isinf(kappa)) {
    nodes_ = {1.0};
    weights_ = {1.0};
    return;
  }
  const auto& gl = detail::gauss_legendre<32>();
  // Panels in s = 1 - t: [s/2, s] for s = 1, 1/2, 1/4, ... then [0, s_last].
  const double s_min = 1.0 / (64.0 * (kappa + 1.0));
  auto add_panel = [&](double s_lo, double s_hi) {
    const double mid = 0.5 * (s_lo + s_hi);
    const double half = 0.5 * (s_hi - s_lo);
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      const double s = mid + half * gl.x[i];
      nodes_.push_back(1.0 - s);
      weights_.push_back(gl.w[i] * half * std::exp(-kappa * s * (2.0 - s)));
    }
  };
  double s = 1.0;
  while (s > s_min) {
    add_panel(0.5 * s, s);
    s *= 0.5;
  }
  add_panel(0.0, s);
  double total = 0.0;
  for (double w : weights_) total += w;
  for (double& w : weights_) w /= total;
}

ExtracellularDiffusivities noddi_extracellular(double icvf, double tau1) {
  const double perp = kNoddiDPar * (1.0 - icvf);
  const double spread = kNoddiDPar - perp;
  return {perp + spread * tau1, perp + spread * (1.0 - tau1) / 2.0};
}

double noddi_signal(const NoddiGroundTruth& truth, double b, const Eigen::Vector3d& g, int order) {
  if (order < kMinSphereQuadratureOrder) {
    throw ConfigError("sphere quadrature order " + std::to_string(order) + " is below the minimum " +
                      std::to_string(kMinSphereQuadratureOrder));
  }
  check_fraction(truth.icvf, "ICVF");
  check_fraction(truth.isovf, "ISOVF");
  const double kappa = odi_to_kappa(truth.odi);
  const double tau1 = watson_tau1(kappa);
  const Eigen::Vector3d mu = truth.mu.normalized();
  const double c = g.dot(mu);
  const double x = b * kNoddiDPar;

  const double a_iso = std::exp(-b * kNoddiDIso);
  const auto ec = noddi_extracellular(truth.icvf, tau1);
  const double a_ec = std::exp(-b * (ec.radial + (ec.axial - ec.radial) * c * c));

  double a_ic = 0.0;
  if (std::isinf(kappa)) {
    a_ic = std::exp(-x * c * c);
  } else {
    const Eigen::Vector3d e1 = any_orthogonal(mu);
    const Eigen::Vector3d e2 = mu.cross(e1);
    const double p1 = g.dot(e1);
    const double p2 = g.dot(e2);
    std::vector<double> perp(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / order;
      perp[static_cast<std::size_t>(k)] = p1 * std::cos(phi) + p2 * std::sin(phi);
    }
    const WatsonRule rule(kappa);
    for (std::size_t i = 0; i < rule.nodes().size(); ++i) {
      const double t = rule.nodes()[i];
      const double r = std::sqrt(std::max(0.0, 1.0 - t * t));
      double ring = 0.0;
      for (double p : perp) {
        const double proj = c * t + r * p;
        ring += std::exp(-x * proj * proj);
      }
      a_ic += rule.weights()[i] * ring / order;
    }
  }
  return truth.isovf * a_iso + (1.0 - truth.isovf) * (truth.icvf * a_ic + (1.0 - truth.icvf) * a_ec);
}

std::vector<double> DispersedStickSeries::stick_coefficients(double x) {
  const auto& gl = detail::gauss_legendre<128>();
  constexpr std::size_t kMaxDegree = 126;
  std::vector<double> h(kMaxDegree / 2 + 1, 0.0);
  std::vector<double> p;
  for (std::size_t i = 0; i < gl.x.size(); ++i) {
    const double t = gl.x[i];
    legendre_all(t, kMaxDegree, p);
    const double f = gl.w[i] * std::exp(-x * t * t);
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += f * p[2 * j];
  }
  // Drop the negligible tail.
  std::size_t keep = h.size();
  while (keep > 1 && std::abs(h[keep - 1]) < 1e-18 * std::abs(h[0])) --keep;
  h.resize(keep);
  return h;
}

std::vector<double> DispersedStickSeries::watson_moments(double kappa, std::size_t count) {
  std::vector<double> f(count, 1.0);
  if (std::isinf(kappa) || count == 0) return f;
  const WatsonRule rule(kappa);
  std::fill(f.begin(), f.end(), 0.0);
  std::vector<double> p;
  for (std::size_t i = 0; i < rule.nodes().size(); ++i) {
    legendre_all(rule.nodes()[i], 2 * (count - 1), p);
    for (std::size_t j = 0; j < count; ++j) f[j] += rule.weights()[i] * p[2 * j];
  }
  return f;
}

DispersedStickSeries::DispersedStickSeries(double kappa, std::span<const double> x_values)
    : aligned_(std::isinf(kappa)), x_values_(x_values.begin(), x_values.end()) {
  if (!(kappa >= 0.0)) throw RangeError("kappa must be non-negative");
  if (aligned_) return;
  std::vector<std::vector<double>> h;
  std::size_t count = 0;
  for (double x : x_values_) {
    h.push_back(stick_coefficients(x));
    count = std::max(count, h.back().size());
  }
  const auto f = watson_moments(kappa, count);
  for (auto& hx : h) {
    std::vector<double> c(hx.size());
    for (std::size_t j = 0; j < hx.size(); ++j) {
      const double l = 2.0 * static_cast<double>(j);
      c[j] = (2.0 * l + 1.0) / 2.0 * f[j] * hx[j];
    }
    coefficients_.push_back(std::move(c));
  }
}

double DispersedStickSeries::attenuation(std::size_t x_index, double cos_angle) const {
  if (aligned_) return std::exp(-x_values_[x_index] * cos_angle * cos_angle);
  const auto& c = coefficients_[x_index];
  // Legendre recurrence, accumulating even degrees only.
  double p_prev = 1.0;
  double p = cos_angle;
  double sum = c[0];
  const std::size_t max_degree = 2 * (c.size() - 1);
  for (std::size_t l = 1; l < max_degree; ++l) {
    const double dl = static_cast<double>(l);
    const double next = ((2.0 * dl + 1.0) * cos_angle * p - dl * p_prev) / (dl + 1.0);
    p_prev = p;
    p = next;
    if ((l + 1) % 2 == 0) sum += c[(l + 1) / 2] * p;
  }
  return sum;
}

}  // namespace qmap
