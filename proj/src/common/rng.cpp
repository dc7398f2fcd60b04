// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/common/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

namespace qmap {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

double uniform01(Rng& rng) {
  // 53 random bits, never exactly 1.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist;
  return dist(rng);
}

Eigen::Vector3d random_unit_vector(Rng& rng) {
  while (true) {
    Eigen::Vector3d v(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double u3 = uniform01(rng);
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                       a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
  return q.normalized().toRotationMatrix();
}

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& v) {
  // Cross with the coordinate axis least aligned with v.
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();
  Eigen::Index i = 0;
  v.cwiseAbs().minCoeff(&i);
  axis[i] = 1.0;
  return v.cross(axis).normalized();
}

void fill_standard_normal(Rng& rng, std::span<float> out) {
  const std::size_t n = out.size();
  const std::size_t half = n / 2;
  if (half > 0) {
    thread_local std::vector<float> buffer;
    buffer.resize(half);
    // Two 24-bit uniforms in (0, 1] per 64-bit draw.
    float* u1 = out.data();
    float* u2 = out.data() + half;
    for (std::size_t i = 0; i < half; ++i) {
      const std::uint64_t bits = rng();
      u1[i] = static_cast<float>(static_cast<std::int32_t>((bits >> 40) + 1)) * 0x1.0p-24f;
      u2[i] = static_cast<float>(static_cast<std::int32_t>(((bits >> 8) & 0xFFFFFFU) + 1)) *
              0x1.0p-24f;
    }
    const auto h = static_cast<Eigen::Index>(half);
    Eigen::Map<Eigen::ArrayXf> a(u1, h);
    Eigen::Map<Eigen::ArrayXf> b(u2, h);
    Eigen::Map<Eigen::ArrayXf> radius(buffer.data(), h);
    radius = (-2.0f * a.log()).sqrt();
    b *= 2.0f * std::numbers::pi_v<float>;
    a = radius * b.cos();
    b = radius * b.sin();
  }
  if (n % 2 == 1) out[n - 1] = static_cast<float>(standard_normal(rng));
}

}  // namespace qmap
