// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/forward/sampling.hpp"

#include <random>
#include <vector>

#include <Eigen/Geometry>

namespace qmap {
namespace {

double uniform(Rng& rng, Range r) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

std::size_t uniform_count(Rng& rng, CountRange r) {
  std::uniform_int_distribution<std::size_t> dist(r.lo, r.hi);
  return dist(rng);
}

void append_shell(std::vector<Acquisition>& out, Rng& rng, double b, std::size_t n) {
  for (const auto& d : random_scheme_directions(n, rng)) out.push_back({b, d});
}

}  // namespace

DtiGroundTruth sample_dti_tensor(Rng& rng, double d_max) {
  DtiGroundTruth truth;
  truth.d[0] = d_max * uniform01(rng);
  truth.d[1] = truth.d[0] * uniform01(rng);
  truth.d[2] = truth.d[0] * uniform01(rng);
  const Eigen::Vector3d e1 = random_unit_vector(rng);
  Eigen::Vector3d e2;
  do {
    const Eigen::Vector3d r = random_unit_vector(rng);
    e2 = r - r.dot(e1) * e1;
  } while (e2.norm() < 1e-6);
  e2.normalize();
  truth.axes.col(0) = e1;
  truth.axes.col(1) = e2;
  truth.axes.col(2) = e1.cross(e2);
  return truth;
}

NoddiGroundTruth sample_noddi_parameters(Rng& rng) {
  NoddiGroundTruth truth;
  truth.icvf = uniform01(rng);
  truth.isovf = uniform01(rng);
  truth.odi = uniform01(rng);
  truth.mu = random_unit_vector(rng);
  return truth;
}

GradientScheme sample_dti_scheme(Rng& rng, const DtiPrior& prior) {
  const double b = uniform(rng, prior.b);
  const std::size_t n = uniform_count(rng, prior.n);
  std::vector<Acquisition> entries;
  append_shell(entries, rng, b, n);
  return GradientScheme(std::move(entries), prior.n_b0);
}

GradientScheme sample_noddi_scheme(Rng& rng, const NoddiPrior& prior) {
  std::vector<Acquisition> entries;
  for (std::size_t s = 0; s < prior.b.size(); ++s) {
    const double b = uniform(rng, prior.b[s]);
    const std::size_t n = uniform_count(rng, prior.n[s]);
    append_shell(entries, rng, b, n);
  }
  return GradientScheme(std::move(entries), prior.n_b0);
}

std::pair<DtiGroundTruth, GradientScheme> sample_dti_truth(Rng& rng, const DtiPrior& prior) {
  auto truth = sample_dti_tensor(rng, prior.d_max);
  auto scheme = sample_dti_scheme(rng, prior);
  return {truth, std::move(scheme)};
}

std::pair<NoddiGroundTruth, GradientScheme> sample_noddi_truth(Rng& rng, const NoddiPrior& prior) {
  auto truth = sample_noddi_parameters(rng);
  auto scheme = sample_noddi_scheme(rng, prior);
  return {truth, std::move(scheme)};
}

}  // namespace qmap
