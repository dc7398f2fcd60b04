// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>
#include <boost/random/mersenne_twister.hpp>

namespace qmap {

// Same output sequence as std::mt19937_64. The constexpr bounds make it
// usable with the <random> distributions.
class Rng : public boost::random::mt19937_64 {
 public:
  using boost::random::mt19937_64::mt19937_64;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
};

// Independent stream for unit of work `stream` under a run seed. Used so that
// per-sample and per-voxel results do not depend on processing order.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);

Eigen::Vector3d random_unit_vector(Rng& rng);

// Uniformly distributed rotation (Shoemake's subgroup algorithm).
Eigen::Matrix3d random_rotation(Rng& rng);

// Any unit vector orthogonal to `v` (deterministic).
Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& v);

// Fills `out` with standard normal deviates using a vectorized Box-Muller
// transform in single precision. Much faster than drawing one deviate at a
// time, which matters for the random-walk simulator.
void fill_standard_normal(Rng& rng, std::span<float> out);

}  // namespace qmap
