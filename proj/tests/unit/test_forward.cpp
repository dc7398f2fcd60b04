#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include <Eigen/Geometry>

#include "qmap/common/error.hpp"
#include "qmap/fit/fit.hpp"
#include "qmap/forward/dataset.hpp"
#include "qmap/forward/models.hpp"
#include "qmap/forward/sampling.hpp"
#include "qmap/forward/simulate.hpp"

using namespace qmap;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

GradientScheme single(double b, const Eigen::Vector3d& g) { return GradientScheme({{b, g}}, 1); }

}  // namespace

TEST_CASE("dti_signal") {
  Rng rng = make_rng(1);
  DtiGroundTruth iso;
  iso.d = {1e-3, 1e-3, 1e-3};
  iso.axes = random_rotation(rng);
  for (int i = 0; i < 10; ++i) {
    CHECK(dti_signal(iso, 800.0, random_unit_vector(rng)) == doctest::Approx(std::exp(-0.8)));
  }
  const DtiGroundTruth t = sample_dti_tensor(rng);
  CHECK(dti_signal(t, 0.0, random_unit_vector(rng)) == 1.0);
  CHECK(dti_signal(t, 1000.0, t.axes.col(0)) == doctest::Approx(std::exp(-1000.0 * t.d[0])));
}

TEST_CASE("DTI signals lie in (0, 1] and fall with b") {
  Rng rng = make_rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto t = sample_dti_tensor(rng);
    const Eigen::Vector3d g = random_unit_vector(rng);
    double prev = 1.0;
    for (double b = 100.0; b <= 3000.0; b += 100.0) {
      const double s = dti_signal(t, b, g);
      CHECK(s > 0.0);
      CHECK(s <= prev);
      prev = s;
    }
  }
}

TEST_CASE("odi and kappa mapping") {
  CHECK(std::abs(odi_to_kappa(1.0)) < 1e-15);
  CHECK(std::isinf(odi_to_kappa(0.0)));
  for (double odi : {0.05, 0.3, 0.7, 0.95}) {
    CHECK(kappa_to_odi(odi_to_kappa(odi)) == doctest::Approx(odi).epsilon(1e-12));
  }
}

TEST_CASE("watson_tau1 against high-resolution quadrature") {
  // Frozen from an independent 1-D integral of t^2 exp(k t^2) over [0, 1]
  // at 50-digit precision.
  CHECK(watson_tau1(0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(watson_tau1(1.0) == doctest::Approx(0.42923070582775096).epsilon(1e-10));
  CHECK(watson_tau1(2.0) == doctest::Approx(0.53126455768653284).epsilon(1e-10));
  CHECK(watson_tau1(4.0) == doctest::Approx(0.70462659234910662).epsilon(1e-10));
  CHECK(watson_tau1(8.0) == doctest::Approx(0.8620688786081694).epsilon(1e-10));
  CHECK(watson_tau1(16.0) == doctest::Approx(0.93513524604588313894).epsilon(1e-10));
  CHECK(watson_tau1(64.0) == doctest::Approx(0.98424786301765796).epsilon(1e-10));
}

TEST_CASE("watson_tau1 is monotone and bounded") {
  double prev = 1.0 / 3.0 - 1e-12;
  for (double k = 0.0; k <= 500.0; k += 0.5) {
    const double t = watson_tau1(k);
    CHECK(t >= prev);
    CHECK(t >= 1.0 / 3.0 - 1e-12);
    CHECK(t <= 1.0);
    prev = t;
  }
}

TEST_CASE("watson_sample at kappa 0 is uniform in cos(theta)") {
  Rng rng = make_rng(4);
  const Eigen::Vector3d mu = random_unit_vector(rng);
  constexpr int n = 100000;
  std::vector<double> c(n);
  for (auto& x : c) x = mu.dot(watson_sample(rng, mu, 0.0));
  std::sort(c.begin(), c.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = (c[i] + 1.0) / 2.0;
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));  // alpha = 0.01
}

TEST_CASE("watson_sample concentrates and matches tau1") {
  Rng rng = make_rng(5);
  const Eigen::Vector3d mu = random_unit_vector(rng);
  double m = 0.0;
  for (int i = 0; i < 10000; ++i) m += std::pow(mu.dot(watson_sample(rng, mu, 1e4)), 2);
  CHECK(m / 10000 > 0.99);

  constexpr int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = std::pow(mu.dot(watson_sample(rng, mu, 16.0)), 2);
    s += t;
    s2 += t * t;
  }
  const double mean = s / n;
  const double sd = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - watson_tau1(16.0)) < 3.0 * sd);
}

TEST_CASE("noddi_signal limits") {
  Rng rng = make_rng(6);
  const Eigen::Vector3d g = random_unit_vector(rng);
  NoddiGroundTruth csf{0.3, 1.0, 0.4, random_unit_vector(rng)};
  CHECK(noddi_signal(csf, 2000.0, g) == doctest::Approx(std::exp(-2000.0 * kNoddiDIso)));
  NoddiGroundTruth stick{1.0, 0.0, 1e-8, Eigen::Vector3d::UnitZ()};
  CHECK(noddi_signal(stick, 2000.0, Eigen::Vector3d::UnitX()) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(noddi_signal(stick, 0.0, g) == doctest::Approx(1.0));
}

TEST_CASE("noddi_signal is rotation invariant") {
  Rng rng = make_rng(7);
  for (int i = 0; i < 20; ++i) {
    NoddiGroundTruth t = sample_noddi_parameters(rng);
    t.odi = std::max(t.odi, 0.02);
    const Eigen::Vector3d g = random_unit_vector(rng);
    const Eigen::Matrix3d r = random_rotation(rng);
    NoddiGroundTruth rt = t;
    rt.mu = r * t.mu;
    CHECK(noddi_signal(rt, 1500.0, r * g) == doctest::Approx(noddi_signal(t, 1500.0, g)).epsilon(1e-10));
  }
}

TEST_CASE("Legendre series matches the sphere quadrature") {
  Rng rng = make_rng(8);
  for (int i = 0; i < 20; ++i) {
    NoddiGroundTruth t = sample_noddi_parameters(rng);
    t.isovf = 0.0;
    t.icvf = 1.0;
    t.odi = std::max(t.odi, 0.02);
    const double x = 2000.0 * kNoddiDPar;
    DispersedStickSeries series(odi_to_kappa(t.odi), std::vector<double>{x});
    const Eigen::Vector3d g = random_unit_vector(rng);
    CHECK(series.attenuation(0, g.dot(t.mu)) ==
          doctest::Approx(noddi_signal(t, 2000.0, g, 64)).epsilon(1e-8));
  }
}

TEST_CASE("priors") {
  Rng rng = make_rng(9);
  constexpr int n = 100000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  double d1_max = 0.0, d1_min = 1.0;
  bool ordered = true;
  for (int i = 0; i < n; ++i) {
    const auto t = sample_dti_tensor(rng);
    d1_max = std::max(d1_max, t.d[0]);
    d1_min = std::min(d1_min, t.d[0]);
    ordered = ordered && t.d[1] <= t.d[0] && t.d[2] <= t.d[0];
    mean += t.axes.col(0);
  }
  mean /= n;
  CHECK(d1_max <= 3.5e-3);
  CHECK(d1_min >= 0.0);
  CHECK(ordered);
  CHECK(mean.cwiseAbs().maxCoeff() < 3.0 * std::sqrt(1.0 / 3.0 / n));

  bool b_ok = true, n_ok = true;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_noddi_scheme(rng);
    const auto shells = group_shells(s);
    if (shells.size() != 3) {
      n_ok = false;
      break;
    }
    b_ok = b_ok && shells.shells[1].b >= 500.0 && shells.shells[1].b <= 900.0;
    n_ok = n_ok && shells.shells[0].members.size() <= 10 && shells.shells[1].members.size() <= 50 &&
           shells.shells[2].members.size() <= 100;
  }
  CHECK(b_ok);
  CHECK(n_ok);
}

TEST_CASE("PGSE timing") {
  const SimConfig c = SimConfig::dti();
  const PgseSequence seq(c);
  CHECK(seq.step_seconds() == doctest::Approx(2e-4));
  // Stejskal-Tanner with the discretized lobes.
  const double g = seq.gradient_amplitude(1000.0);
  const double d = 0.020, big = 0.036;
  const double b_si = std::pow(c.gamma * g * d, 2) * (big - d / 3.0);
  CHECK(b_si == doctest::Approx(1000.0 * 1e6).epsilon(1e-9));
  SimConfig bad = c;
  bad.delta_big = 10.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mc_simulate without diffusion gives exactly one") {
  DtiGroundTruth t;
  SimConfig c = SimConfig::dti();
  c.n_protons = 1000;
  Rng rng = make_rng(10);
  const auto s = mc_simulate(t, builtin_scheme("dti_b"), c, rng);
  for (double v : s.values) CHECK(v == 1.0);
}

TEST_CASE("mc_simulate isotropic free diffusion") {
  DtiGroundTruth t;
  t.d = {1e-3, 1e-3, 1e-3};
  SimConfig c = SimConfig::dti();
  c.n_protons = 100000;
  Rng rng = make_rng(11);
  const auto s = mc_simulate(t, single(1000.0, Eigen::Vector3d(0, 0.6, 0.8)), c, rng);
  CHECK(std::abs(s.values[0] - std::exp(-1.0)) < 0.01);
}

TEST_CASE("mc_simulate with icvf 0 does not depend on odi") {
  SimConfig c = SimConfig::noddi();
  c.n_protons = 2000;
  const auto scheme = builtin_scheme("noddi_b");
  NoddiGroundTruth a{0.0, 0.2, 0.2, Eigen::Vector3d::UnitX()};
  NoddiGroundTruth b = a;
  b.odi = 0.8;
  Rng r1 = make_rng(12), r2 = make_rng(12);
  CHECK(mc_simulate(a, scheme, c, r1).values == mc_simulate(b, scheme, c, r2).values);
}

TEST_CASE("noise model") {
  SimConfig c = SimConfig::dti();
  c.snr = 30.0;
  Rng rng = make_rng(13);
  const auto m = simulate_b0(c, 1000, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : m) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / 1000.0;
  const double sd = std::sqrt(s2 / 1000.0 - mean * mean);
  CHECK(std::abs(sd - 1.0 / 30.0) < 0.2 / 30.0);
  c.snr.reset();
  for (double v : simulate_b0(c, 10, rng)) CHECK(v == 1.0);
}

TEST_CASE("datasets") {
  auto cfg = DatasetConfig::for_model(ModelKind::dti);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.n_samples = 1000;
  cfg.analytic = true;
  cfg.seed = 21;
  const auto data = generate_dataset(cfg, InputEncoding::dti(InputVariant::q2d, 10));
  CHECK(data.size() == 1000);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float fa = data.label(i)[0];
    CHECK(fa >= 0.0f);
    CHECK(fa <= 1.0f);
  }

  const auto dir = std::filesystem::temp_directory_path() / "qmap_unit_datasets";
  std::filesystem::create_directories(dir);
  auto small = cfg;
  small.n_samples = 20;
  small.analytic = false;
  small.sim.n_protons = 500;
  const auto enc = InputEncoding::dti(InputVariant::q2d, 8);
  write_dataset(dir / "a.qmap", generate_dataset(small, enc));
  small.threads = 1;
  write_dataset(dir / "b.qmap", generate_dataset(small, enc));
  CHECK(slurp(dir / "a.qmap") == slurp(dir / "b.qmap"));

  const auto back = read_dataset(dir / "a.qmap");
  CHECK(back.size() == 20);
  CHECK(back.encoding.qmatrix.q_n == 8);
  CHECK(back.inputs == generate_dataset(small, enc).inputs);
  std::filesystem::remove_all(dir);
}

TEST_CASE("NODDI labels are the ground truth") {
  auto cfg = DatasetConfig::for_model(ModelKind::noddi);
  cfg.n_samples = 5;
  cfg.analytic = true;
  cfg.snr.reset();
  const auto raw = simulate_samples(cfg);
  for (const auto& s : raw) {
    REQUIRE(s.label.size() == 3);
    for (double v : s.label) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (double v : s.signals) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}
