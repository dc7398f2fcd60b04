// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/fit/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "qmap/common/error.hpp"

namespace qmap {
namespace {

Eigen::Matrix<double, 1, 6> design_row(double b, const Eigen::Vector3d& g) {
  Eigen::Matrix<double, 1, 6> r;
  r << g.x() * g.x(), g.y() * g.y(), g.z() * g.z(), 2.0 * g.x() * g.y(), 2.0 * g.x() * g.z(),
      2.0 * g.y() * g.z();
  return b * r;
}

double sum_squares(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

DtiTensorFit fit_dti_lls(std::span<const double> signals, const GradientScheme& scheme) {
  const std::size_t n = scheme.size();
  if (signals.size() != n) {
    throw ShapeError("got " + std::to_string(signals.size()) + " signals for " +
                     std::to_string(n) + " diffusion-weighted entries");
  }
  if (n < 6) {
    throw NumericalError("tensor fit needs at least 6 diffusion-weighted signals, got " +
                         std::to_string(n));
  }
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 6);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!(signals[i] > 0.0) || !std::isfinite(signals[i])) {
      throw DataError("signal " + std::to_string(i) + " is not positive (" +
                      std::to_string(signals[i]) + "); log-linear fit undefined");
    }
    const auto row = static_cast<Eigen::Index>(i);
    a.row(row) = design_row(scheme[i].b, scheme[i].dir);
    y(row) = -std::log(signals[i]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) {
    throw NumericalError("gradient scheme is degenerate: tensor design has rank " +
                         std::to_string(qr.rank()) + " < 6");
  }
  const Eigen::VectorXd x = qr.solve(y);
  DtiTensorFit fit;
  fit.tensor << x(0), x(3), x(4), x(3), x(1), x(5), x(4), x(5), x(2);
  fit.residual = std::sqrt((a * x - y).squaredNorm() / static_cast<double>(n));
  return fit;
}

SymmetricEigen eig_sym3(const Eigen::Matrix3d& d) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(d);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  SymmetricEigen out;
  // Eigen sorts ascending.
  for (int i = 0; i < 3; ++i) {
    out.values[static_cast<std::size_t>(i)] = solver.eigenvalues()(2 - i);
    out.vectors.col(i) = solver.eigenvectors().col(2 - i);
  }
  return out;
}

DtiScalars dti_scalars(double l1, double l2, double l3) {
  std::array<double, 3> l{std::max(l1, 0.0), std::max(l2, 0.0), std::max(l3, 0.0)};
  std::sort(l.begin(), l.end(), std::greater<>());
  DtiScalars s;
  s.md = (l[0] + l[1] + l[2]) / 3.0;
  s.ad = l[0];
  s.rd = (l[1] + l[2]) / 2.0;
  const double norm2 = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  if (norm2 > 0.0) {
    double dev2 = 0.0;
    for (double v : l) dev2 += (v - s.md) * (v - s.md);
    s.fa = std::min(1.0, std::sqrt(1.5 * dev2 / norm2));
  }
  return s;
}

DtiScalars dti_scalars(const Eigen::Matrix3d& tensor) {
  const auto e = eig_sym3(tensor);
  return dti_scalars(e.values[0], e.values[1], e.values[2]);
}

NoddiSignalModel::NoddiSignalModel(const GradientScheme& scheme) {
  std::map<double, std::size_t> index;
  for (const auto& e : scheme.entries()) {
    b_.push_back(e.b);
    dirs_.push_back(e.dir.normalized());
    const double x = e.b * kNoddiDPar;
    auto [it, inserted] = index.try_emplace(x, x_values_.size());
    if (inserted) x_values_.push_back(x);
    x_index_.push_back(it->second);
  }
}

void NoddiSignalModel::prepare(double odi) const {
  if (series_ && odi == cached_odi_) return;
  const double kappa = odi_to_kappa(odi);
  series_.emplace(kappa, x_values_);
  tau1_ = watson_tau1(kappa);
  cached_odi_ = odi;
}

void NoddiSignalModel::predict(double icvf, double isovf, double odi, const Eigen::Vector3d& mu,
                               std::span<double> out) const {
  prepare(odi);
  const auto ec = noddi_extracellular(icvf, tau1_);
  const Eigen::Vector3d m = mu.normalized();
  for (std::size_t j = 0; j < b_.size(); ++j) {
    const double c = m.dot(dirs_[j]);
    const double a_ic = series_->attenuation(x_index_[j], c);
    const double a_ec = std::exp(-b_[j] * (ec.radial + (ec.axial - ec.radial) * c * c));
    const double a_iso = std::exp(-b_[j] * kNoddiDIso);
    out[j] = isovf * a_iso + (1.0 - isovf) * (icvf * a_ic + (1.0 - icvf) * a_ec);
  }
}

NoddiFit fit_noddi(std::span<const double> signals, const GradientScheme& scheme,
                   const NoddiFitOptions& options) {
  const std::size_t n = scheme.size();
  if (signals.size() != n) {
    throw ShapeError("got " + std::to_string(signals.size()) + " signals for " +
                     std::to_string(n) + " diffusion-weighted entries");
  }
  if (group_shells(scheme).size() < 2) {
    throw DataError("NODDI fit needs at least two non-zero shells");
  }
  if (options.grid_n < 2 || options.n_mu == 0) throw ConfigError("NODDI grid too small");

  std::vector<double> grid(static_cast<std::size_t>(options.grid_n));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid[k] = static_cast<double>(k) / static_cast<double>(grid.size() - 1);
  }
  const auto mus = hemisphere_directions(options.n_mu);

  std::vector<double> b(n);
  std::vector<Eigen::Vector3d> g(n);
  std::vector<double> a_iso(n);
  std::map<double, std::size_t> x_lookup;
  std::vector<double> x_values;
  std::vector<std::size_t> x_index(n);
  for (std::size_t j = 0; j < n; ++j) {
    b[j] = scheme[j].b;
    g[j] = scheme[j].dir.normalized();
    a_iso[j] = std::exp(-b[j] * kNoddiDIso);
    auto [it, inserted] = x_lookup.try_emplace(b[j] * kNoddiDPar, x_values.size());
    if (inserted) x_values.push_back(b[j] * kNoddiDPar);
    x_index[j] = it->second;
  }

  // Coarse grid. For fixed (icvf, odi, mu) the objective is a quadratic in
  // isovf, so each isovf value costs O(1) once three sums are known.
  std::vector<NoddiFit> per_mu(mus.size());
  for (auto& f : per_mu) f.objective = std::numeric_limits<double>::infinity();
  std::vector<double> cosines(n), a_ic(n);
  for (double odi : grid) {
    const double kappa = odi_to_kappa(odi);
    const DispersedStickSeries series(kappa, x_values);
    const double tau1 = watson_tau1(kappa);
    for (std::size_t m = 0; m < mus.size(); ++m) {
      const Eigen::Vector3d& mu = mus[m];
      NoddiFit& best = per_mu[m];
      for (std::size_t j = 0; j < n; ++j) {
        cosines[j] = mu.dot(g[j]);
        a_ic[j] = series.attenuation(x_index[j], cosines[j]);
      }
      for (double icvf : grid) {
        const auto ec = noddi_extracellular(icvf, tau1);
        double rr = 0.0, rd = 0.0, dd = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double c2 = cosines[j] * cosines[j];
          const double a_ec = std::exp(-b[j] * (ec.radial + (ec.axial - ec.radial) * c2));
          const double tissue = icvf * a_ic[j] + (1.0 - icvf) * a_ec;
          const double r = tissue - signals[j];
          const double d = a_iso[j] - tissue;
          rr += r * r;
          rd += r * d;
          dd += d * d;
        }
        for (double isovf : grid) {
          const double obj = rr + 2.0 * isovf * rd + isovf * isovf * dd;
          if (obj < best.objective) {
            best.objective = obj;
            best.icvf = icvf;
            best.isovf = isovf;
            best.odi = odi;
            best.mu = mu;
          }
        }
      }
    }
  }

  // Compass search over (icvf, isovf, odi) and two small rotations of mu.
  const NoddiSignalModel model(scheme);
  std::vector<double> pred(n);
  auto refine = [&](NoddiFit best) {
  auto objective = [&](double icvf, double isovf, double odi, const Eigen::Vector3d& mu) {
    model.predict(icvf, isovf, odi, mu, pred);
    return sum_squares(pred, signals);
  };
  best.objective = objective(best.icvf, best.isovf, best.odi, best.mu);
  best.objective_history.push_back(best.objective);

  std::array<double, 5> step{options.initial_step, options.initial_step, options.initial_step,
                             options.initial_angle, options.initial_angle};
  // odi stays on its grid value for the first sweeps so mu can settle while
  // it still influences the signal.
  const int odi_frozen = options.refine_sweeps / 5;
  for (int sweep = 0; sweep < options.refine_sweeps; ++sweep) {
    bool improved = false;
    for (std::size_t c = 0; c < 5; ++c) {
      if (c == 2 && sweep < odi_frozen) continue;
      for (double sign : {1.0, -1.0}) {
        double p[3] = {best.icvf, best.isovf, best.odi};
        Eigen::Vector3d mu = best.mu;
        if (c < 3) {
          const double moved = std::clamp(p[c] + sign * step[c], 0.0, 1.0);
          if (moved == p[c]) continue;
          p[c] = moved;
        } else {
          const Eigen::Vector3d u = any_orthogonal(mu);
          const Eigen::Vector3d axis = c == 3 ? u : Eigen::Vector3d(mu.cross(u));
          mu = (Eigen::AngleAxisd(sign * step[c], axis) * mu).normalized();
        }
        const double obj = objective(p[0], p[1], p[2], mu);
        if (obj < best.objective) {
          best.objective = obj;
          best.icvf = p[0];
          best.isovf = p[1];
          best.odi = p[2];
          best.mu = mu;
          improved = true;
          break;
        }
      }
    }
    if (!improved) {
      for (auto& s : step) s *= options.shrink;
    }
    best.objective_history.push_back(best.objective);
  }

  // Levenberg-Marquardt polish in the same five coordinates; the compass
  // sweeps crawl along the narrow icvf/isovf valley.
  const auto n_idx = static_cast<Eigen::Index>(n);
  Eigen::Map<const Eigen::VectorXd> target(signals.data(), n_idx);
  auto residuals = [&](const Eigen::Matrix<double, 5, 1>& t, const Eigen::Vector3d& mu0,
                       const Eigen::Vector3d& u, const Eigen::Vector3d& v, Eigen::VectorXd& r,
                       Eigen::Vector3d& mu_out) {
    const Eigen::Vector3d w = t(3) * u + t(4) * v;
    mu_out = w.norm() > 0.0 ? Eigen::Vector3d(Eigen::AngleAxisd(w.norm(), w.normalized()) * mu0)
                            : mu0;
    model.predict(t(0), t(1), t(2), mu_out, pred);
    r = Eigen::Map<const Eigen::VectorXd>(pred.data(), n_idx) - target;
  };
  double lambda = 1e-3;
  for (int iter = 0; iter < options.polish_iterations; ++iter) {
    const Eigen::Vector3d mu0 = best.mu;
    const Eigen::Vector3d u = any_orthogonal(mu0);
    const Eigen::Vector3d v = mu0.cross(u);
    Eigen::Matrix<double, 5, 1> t;
    t << best.icvf, best.isovf, best.odi, 0.0, 0.0;
    Eigen::VectorXd r0, rp, rm;
    Eigen::Vector3d mu_tmp;
    residuals(t, mu0, u, v, r0, mu_tmp);
    Eigen::MatrixXd jac(n_idx, 5);
    constexpr double kH = 1e-6;
    for (int c = 0; c < 5; ++c) {
      Eigen::Matrix<double, 5, 1> tp = t, tm = t;
      tp(c) += kH;
      tm(c) -= kH;
      if (c < 3) {
        tp(c) = std::min(tp(c), 1.0);
        tm(c) = std::max(tm(c), 0.0);
      }
      residuals(tp, mu0, u, v, rp, mu_tmp);
      residuals(tm, mu0, u, v, rm, mu_tmp);
      jac.col(c) = (rp - rm) / (tp(c) - tm(c));
    }
    const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 5, 1> jtr = jac.transpose() * r0;
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::Matrix<double, 5, 5> lhs = jtj;
      lhs.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      Eigen::Matrix<double, 5, 1> trial = t - lhs.ldlt().solve(jtr);
      for (int c = 0; c < 3; ++c) trial(c) = std::clamp(trial(c), 0.0, 1.0);
      if (!trial.allFinite()) break;
      Eigen::VectorXd r;
      Eigen::Vector3d mu;
      residuals(trial, mu0, u, v, r, mu);
      const double obj = r.squaredNorm();
      if (obj < best.objective) {
        best.objective = obj;
        best.icvf = trial(0);
        best.isovf = trial(1);
        best.odi = trial(2);
        best.mu = mu.normalized();
        lambda = std::max(lambda * 0.3, 1e-9);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    best.objective_history.push_back(best.objective);
    if (!accepted) break;
  }

    return best;
  };

  // Refine the best few orientations; a poor orientation can trap the local
  // search near odi = 1, where mu barely affects the signal.
  std::sort(per_mu.begin(), per_mu.end(),
            [](const NoddiFit& a, const NoddiFit& b) { return a.objective < b.objective; });
  NoddiFit best;
  best.objective = std::numeric_limits<double>::infinity();
  const std::size_t starts = std::min(std::max<std::size_t>(options.starts, 1), per_mu.size());
  for (std::size_t k = 0; k < starts; ++k) {
    NoddiFit candidate = refine(per_mu[k]);
    if (candidate.objective < best.objective) best = std::move(candidate);
  }

  // Nearly isotropic fits: re-pick mu on a finer lattice at a slightly more
  // concentrated odi and refine once more.
  if (best.odi > 0.95 && best.objective > 0.0) {
    NoddiFit probe = best;
    probe.odi = std::min(best.odi, 0.95);
    probe.objective = std::numeric_limits<double>::infinity();
    for (const auto& mu : hemisphere_directions(8 * options.n_mu)) {
      model.predict(probe.icvf, probe.isovf, probe.odi, mu, pred);
      const double obj = sum_squares(pred, signals);
      if (obj < probe.objective) {
        probe.objective = obj;
        probe.mu = mu;
      }
    }
    NoddiFit candidate = refine(probe);
    if (candidate.objective < best.objective) best = std::move(candidate);
  }

  if (best.mu.z() < 0.0) best.mu = -best.mu;
  best.icvf_unconstrained = best.isovf > 0.99;
  best.odi_unconstrained = best.icvf_unconstrained || best.icvf < 0.01;
  return best;
}

}  // namespace qmap
