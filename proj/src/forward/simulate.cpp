// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/forward/simulate.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "qmap/common/error.hpp"

namespace qmap {
namespace {

constexpr std::size_t kBlock = 512;

long steps_of(double duration, double dt) { return std::lround(duration / dt); }

// Gaussian displacement with principal diffusivities d (mm^2/s) in frame
// `axes`, or a stick along a per-proton Watson orientation.
struct Compartment {
  std::size_t count = 0;
  bool stick = false;
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
  std::array<double, 3> d{0.0, 0.0, 0.0};
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  double kappa = 0.0;
};

Eigen::Matrix3d frame_about(const Eigen::Vector3d& mu) {
  Eigen::Matrix3d r;
  const Eigen::Vector3d u = mu.normalized();
  const Eigen::Vector3d v = any_orthogonal(u);
  r.col(0) = u;
  r.col(1) = v;
  r.col(2) = u.cross(v);
  return r;
}

std::vector<Compartment> compartments_for(const GroundTruth& truth, std::size_t n) {
  std::vector<Compartment> out;
  if (const auto* dti = std::get_if<DtiGroundTruth>(&truth)) {
    Compartment c;
    c.count = n;
    c.axes = dti->axes;
    c.d = dti->d;
    out.push_back(c);
    return out;
  }
  const auto& nd = std::get<NoddiGroundTruth>(truth);
  const auto n_iso = static_cast<std::size_t>(std::lround(static_cast<double>(n) * nd.isovf));
  const auto n_ic = std::min(
      n - n_iso,
      static_cast<std::size_t>(std::lround(static_cast<double>(n) * (1.0 - nd.isovf) * nd.icvf)));
  const std::size_t n_ec = n - n_iso - n_ic;
  const double kappa = odi_to_kappa(nd.odi);

  Compartment ic;
  ic.count = n_ic;
  ic.stick = true;
  ic.mu = nd.mu.normalized();
  ic.kappa = kappa;
  ic.d = {kNoddiDPar, 0.0, 0.0};
  out.push_back(ic);

  const auto ec_d = noddi_extracellular(nd.icvf, watson_tau1(kappa));
  Compartment ec;
  ec.count = n_ec;
  ec.axes = frame_about(nd.mu);
  ec.d = {ec_d.axial, ec_d.radial, ec_d.radial};
  out.push_back(ec);

  Compartment iso;
  iso.count = n_iso;
  iso.d = {kNoddiDIso, kNoddiDIso, kNoddiDIso};
  out.push_back(iso);
  return out;
}

}  // namespace

SimConfig SimConfig::for_echo_time(double te_ms) {
  SimConfig c;
  c.te = te_ms;
  c.delta_small = 20.0;
  c.delta_big = te_ms / 2.0;
  return c;
}

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("simulation config: " + what); };
  if (n_protons == 0) fail("n_protons must be positive");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(delta_small > 0.0)) fail("gradient duration must be positive");
  if (!(delta_big >= delta_small)) fail("lobe separation shorter than lobe duration");
  if (delta_big + delta_small > te + 1e-9) fail("gradient lobes do not fit in the echo time");
  if (steps_of(delta_small, dt) < 1) fail("dt longer than the gradient duration");
  if (!(gamma > 0.0)) fail("gamma must be positive");
  if (snr && !(*snr > 0.0)) fail("snr must be positive");
  if (n_b0_average == 0) fail("n_b0_average must be positive");
}

PgseSequence::PgseSequence(const SimConfig& config) {
  config.validate();
  dt_ = config.dt * 1e-3;
  gamma_ = config.gamma;
  const long n_small = steps_of(config.delta_small, config.dt);
  const long n_big = steps_of(config.delta_big, config.dt);
  delta_small_ = static_cast<double>(n_small) * dt_;
  delta_big_ = static_cast<double>(n_big) * dt_;

  // Displacement of step m (m -> m+1) is weighted by the signed gradient time
  // accumulated from m+1 onwards. Only steps between the first lobe's start
  // and the second lobe's end contribute.
  const long total = n_big + n_small;
  std::vector<int> sign(static_cast<std::size_t>(total), 0);
  for (long k = 0; k < n_small; ++k) sign[static_cast<std::size_t>(k)] = 1;
  for (long k = n_big; k < total; ++k) sign[static_cast<std::size_t>(k)] -= 1;
  long tail = 0;
  std::vector<long> weight(static_cast<std::size_t>(total), 0);
  for (long m = total - 1; m >= 0; --m) {
    weight[static_cast<std::size_t>(m)] = tail;
    tail += sign[static_cast<std::size_t>(m)];
  }
  for (long m = 0; m < total; ++m) {
    const long w = weight[static_cast<std::size_t>(m)];
    if (w == 0) continue;
    const double ws = static_cast<double>(w) * dt_;
    if (!runs_.empty() && runs_.back().weight == ws && m > 0 &&
        weight[static_cast<std::size_t>(m - 1)] == w) {
      ++runs_.back().steps;
    } else {
      runs_.push_back({ws, 1});
    }
  }
}

double PgseSequence::gradient_amplitude(double b) const {
  const double b_si = b * 1e6;
  const double denom =
      gamma_ * gamma_ * delta_small_ * delta_small_ * (delta_big_ - delta_small_ / 3.0);
  return std::sqrt(b_si / denom);
}

std::vector<std::complex<double>> mc_simulate_complex(const GroundTruth& truth,
                                                      const GradientScheme& scheme,
                                                      const SimConfig& config, Rng& rng) {
  const PgseSequence seq(config);
  const std::size_t n_dir = scheme.size();
  std::vector<std::complex<double>> out(n_dir, {0.0, 0.0});
  if (n_dir == 0) return out;

  // Phase of direction j = (gamma G_j g_j) . moment.
  Eigen::MatrixXf q(3, static_cast<Eigen::Index>(n_dir));
  for (std::size_t j = 0; j < n_dir; ++j) {
    const auto& e = scheme[j];
    const double amp = config.gamma * seq.gradient_amplitude(e.b);
    q.col(static_cast<Eigen::Index>(j)) = (amp * e.dir.normalized()).cast<float>();
  }

  const auto& runs = seq.runs();
  const auto n_runs = static_cast<Eigen::Index>(runs.size());
  Eigen::VectorXf run_scale(n_runs);
  for (Eigen::Index r = 0; r < n_runs; ++r) {
    const auto& run = runs[static_cast<std::size_t>(r)];
    run_scale(r) = static_cast<float>(run.weight * std::sqrt(static_cast<double>(run.steps)));
  }

  const double dt = seq.step_seconds();
  Eigen::ArrayXd sum_cos = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n_dir));
  Eigen::ArrayXd sum_sin = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n_dir));
  Eigen::MatrixXf normals;
  Eigen::MatrixXf moment;
  Eigen::MatrixXf phase;

  for (const auto& comp : compartments_for(truth, config.n_protons)) {
    const int n_axes = comp.stick ? 1 : 3;
    std::array<float, 3> step_sd{};
    for (int a = 0; a < 3; ++a) {
      step_sd[static_cast<std::size_t>(a)] = static_cast<float>(
          std::sqrt(2.0 * std::max(comp.d[static_cast<std::size_t>(a)], 0.0) * 1e-6 * dt));
    }
    const Eigen::Matrix3f axes_t = comp.axes.transpose().cast<float>();
    for (std::size_t start = 0; start < comp.count; start += kBlock) {
      const auto b = static_cast<Eigen::Index>(std::min(kBlock, comp.count - start));
      normals.resize(n_runs, b * n_axes);
      fill_standard_normal(rng, std::span<float>(normals.data(), static_cast<std::size_t>(normals.size())));
      const Eigen::RowVectorXf sums = run_scale.transpose() * normals;  // (1, b * n_axes)
      moment.resize(b, 3);
      if (comp.stick) {
        for (Eigen::Index p = 0; p < b; ++p) {
          const Eigen::Vector3f n = watson_sample(rng, comp.mu, comp.kappa).cast<float>();
          moment.row(p) = (step_sd[0] * sums(p)) * n.transpose();
        }
      } else {
        Eigen::MatrixXf local(b, 3);
        for (int a = 0; a < 3; ++a) {
          local.col(a) = step_sd[static_cast<std::size_t>(a)] *
                         sums.segment(static_cast<Eigen::Index>(a) * b, b).transpose();
        }
        moment.noalias() = local * axes_t;
      }
      phase.noalias() = moment * q;
      sum_cos += phase.array().cos().colwise().sum().transpose().cast<double>();
      sum_sin += phase.array().sin().colwise().sum().transpose().cast<double>();
    }
  }

  const double inv_n = 1.0 / static_cast<double>(config.n_protons);
  for (std::size_t j = 0; j < n_dir; ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    out[j] = {sum_cos(i) * inv_n, sum_sin(i) * inv_n};
  }
  return out;
}

std::complex<double> add_complex_noise(std::complex<double> value, double snr, Rng& rng) {
  const double sigma = 1.0 / snr;
  const double re = standard_normal(rng);
  const double im = standard_normal(rng);
  return value + std::complex<double>(sigma * re, sigma * im);
}

std::vector<double> simulate_b0(const SimConfig& config, std::size_t count, Rng& rng) {
  std::vector<double> out(count, 1.0);
  if (config.snr) {
    for (auto& v : out) v = std::abs(add_complex_noise({1.0, 0.0}, *config.snr, rng));
  }
  return out;
}

SignalSet normalize_with_noise(std::span<const std::complex<double>> clean,
                               const SimConfig& config, Rng& rng) {
  SignalSet s;
  s.values.resize(clean.size());
  if (!config.snr) {
    for (std::size_t i = 0; i < clean.size(); ++i) s.values[i] = std::abs(clean[i]);
    return s;
  }
  for (std::size_t i = 0; i < clean.size(); ++i) {
    s.values[i] = std::abs(add_complex_noise(clean[i], *config.snr, rng));
  }
  const auto b0 = simulate_b0(config, config.n_b0_average, rng);
  double mean = 0.0;
  for (double v : b0) mean += v;
  mean /= static_cast<double>(b0.size());
  for (auto& v : s.values) v /= mean;
  return s;
}

SignalSet mc_simulate(const GroundTruth& truth, const GradientScheme& scheme,
                      const SimConfig& config, Rng& rng) {
  const auto clean = mc_simulate_complex(truth, scheme, config, rng);
  return normalize_with_noise(clean, config, rng);
}

SignalSet analytic_signals(const GroundTruth& truth, const GradientScheme& scheme,
                           const SimConfig& config, Rng& rng) {
  std::vector<std::complex<double>> clean(scheme.size());
  for (std::size_t j = 0; j < scheme.size(); ++j) {
    const auto& e = scheme[j];
    double v = 0.0;
    if (const auto* dti = std::get_if<DtiGroundTruth>(&truth)) {
      v = dti_signal(*dti, e.b, e.dir);
    } else {
      v = noddi_signal(std::get<NoddiGroundTruth>(truth), e.b, e.dir);
    }
    clean[j] = {v, 0.0};
  }
  return normalize_with_noise(clean, config, rng);
}

}  // namespace qmap
