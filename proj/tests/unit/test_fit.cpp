#include <doctest.h>

#include <cmath>

#include "qmap/common/error.hpp"
#include "qmap/fit/fit.hpp"
#include "qmap/forward/models.hpp"
#include "qmap/forward/sampling.hpp"
#include "qmap/forward/simulate.hpp"

using namespace qmap;

namespace {

std::vector<double> dti_signals(const DtiGroundTruth& t, const GradientScheme& s) {
  std::vector<double> out;
  for (const auto& e : s.entries()) out.push_back(dti_signal(t, e.b, e.dir));
  return out;
}

std::vector<double> noddi_signals(const NoddiGroundTruth& t, const GradientScheme& s) {
  std::vector<double> out;
  for (const auto& e : s.entries()) out.push_back(noddi_signal(t, e.b, e.dir));
  return out;
}

}  // namespace

TEST_CASE("fit_dti_lls recovers noise-free tensors") {
  Rng rng = make_rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto [t, s] = sample_dti_truth(rng);
    const auto fit = fit_dti_lls(dti_signals(t, s), s);
    CHECK((fit.tensor - t.tensor()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fit_dti_lls on isotropic signals") {
  const auto s = builtin_scheme("dti_b");
  std::vector<double> sig(s.size(), std::exp(-1000.0 * 0.8e-3));
  const auto fit = fit_dti_lls(sig, s);
  CHECK((fit.tensor - 0.8e-3 * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fit_dti_lls errors") {
  const auto s = builtin_scheme("dti_a");
  std::vector<double> sig(s.size(), 0.5);
  sig[3] = 0.0;
  CHECK_THROWS_AS(fit_dti_lls(sig, s), DataError);
  sig.pop_back();
  CHECK_THROWS_AS(fit_dti_lls(sig, s), DataError);
  std::vector<Acquisition> flat;
  for (int i = 0; i < 8; ++i) flat.push_back({1000.0, {std::cos(i * 0.4), std::sin(i * 0.4), 0.0}});
  std::vector<double> sig8(8, 0.5);
  CHECK_THROWS_AS(fit_dti_lls(sig8, GradientScheme(flat, 1)), NumericalError);
}

TEST_CASE("fit_dti_lls noise error falls with more directions") {
  const auto full = builtin_scheme("dti_a");
  SubsetOptions opts;
  opts.seed = 3;
  const auto few = select_subset(full, 12, opts);
  DtiGroundTruth t;
  t.d = {1.7e-3, 0.5e-3, 0.3e-3};
  Rng rng = make_rng(2);
  t.axes = random_rotation(rng);
  SimConfig c;
  c.snr = 50.0;
  auto rms = [&](const GradientScheme& s) {
    double e = 0.0;
    for (int r = 0; r < 300; ++r) {
      const auto sig = analytic_signals(t, s, c, rng);
      e += (fit_dti_lls(sig.values, s).tensor - t.tensor()).squaredNorm();
    }
    return std::sqrt(e / 300.0);
  };
  CHECK(rms(full) < rms(few));
}

TEST_CASE("eig_sym3") {
  const auto e = eig_sym3(Eigen::Vector3d(3e-3, 2e-3, 1e-3).asDiagonal());
  CHECK(e.values[0] == doctest::Approx(3e-3));
  CHECK(e.values[1] == doctest::Approx(2e-3));
  CHECK(e.values[2] == doctest::Approx(1e-3));
  CHECK(std::abs(e.vectors.col(0).dot(Eigen::Vector3d::UnitX())) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors.col(2).dot(Eigen::Vector3d::UnitZ())) == doctest::Approx(1.0));

  const auto iso = eig_sym3(0.7e-3 * Eigen::Matrix3d::Identity());
  for (double v : iso.values) CHECK(v == doctest::Approx(0.7e-3).epsilon(1e-14));

  Rng rng = make_rng(4);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Matrix3d r = random_rotation(rng);
    const Eigen::Vector3d l(2.5e-3, 1.1e-3, 0.2e-3);
    const auto er = eig_sym3(r * l.asDiagonal() * r.transpose());
    for (int k = 0; k < 3; ++k) CHECK(er.values[k] == doctest::Approx(l[k]).epsilon(1e-12));
  }
}

TEST_CASE("dti_scalars") {
  const double d = 0.9e-3;
  const auto iso = dti_scalars(d, d, d);
  CHECK(iso.fa == doctest::Approx(0.0).scale(1));
  CHECK(iso.md == doctest::Approx(d));
  CHECK(iso.ad == doctest::Approx(d));
  CHECK(iso.rd == doctest::Approx(d));
  CHECK(dti_scalars(d, 0.0, 0.0).fa == doctest::Approx(1.0).epsilon(1e-15));
  const auto s = dti_scalars(3e-3, 2e-3, 1e-3);
  CHECK(std::abs(s.fa - std::sqrt(3.0 / 14.0)) < 1e-12);
  CHECK(s.md == doctest::Approx(2e-3));
  CHECK(s.ad == doctest::Approx(3e-3));
  CHECK(s.rd == doctest::Approx(1.5e-3));
  CHECK(dti_scalars(Eigen::Matrix3d::Zero()).fa == 0.0);
}

TEST_CASE("dti_scalars is scale equivariant") {
  Rng rng = make_rng(5);
  for (int i = 0; i < 100; ++i) {
    const double a = uniform01(rng) * 3e-3, b = uniform01(rng) * 3e-3, c = uniform01(rng) * 3e-3;
    const double k = 0.1 + 10.0 * uniform01(rng);
    const auto s = dti_scalars(a, b, c);
    const auto t = dti_scalars(k * a, k * b, k * c);
    CHECK(t.fa == doctest::Approx(s.fa).epsilon(1e-12));
    CHECK(t.md == doctest::Approx(k * s.md).epsilon(1e-12));
    CHECK(t.ad == doctest::Approx(k * s.ad).epsilon(1e-12));
    CHECK(t.rd == doctest::Approx(k * s.rd).epsilon(1e-12));
  }
}

TEST_CASE("NoddiSignalModel agrees with noddi_signal") {
  const auto s = builtin_scheme("noddi_a");
  NoddiSignalModel model(s);
  Rng rng = make_rng(6);
  std::vector<double> out(s.size());
  for (int i = 0; i < 10; ++i) {
    NoddiGroundTruth t = sample_noddi_parameters(rng);
    t.odi = std::max(t.odi, 0.02);
    model.predict(t.icvf, t.isovf, t.odi, t.mu, out);
    const auto ref = noddi_signals(t, s);
    for (std::size_t j = 0; j < s.size(); ++j) CHECK(out[j] == doctest::Approx(ref[j]).epsilon(1e-7));
  }
}

TEST_CASE("fit_noddi on pure CSF") {
  const auto s = builtin_scheme("noddi_a");
  const NoddiGroundTruth t{0.0, 1.0, 0.5, Eigen::Vector3d::UnitY()};
  const auto f = fit_noddi(noddi_signals(t, s), s);
  CHECK(f.isovf == doctest::Approx(1.0).epsilon(0.05));
  CHECK(f.icvf_unconstrained);
  CHECK(f.odi_unconstrained);
}

TEST_CASE("fit_noddi round trip") {
  const auto s = builtin_scheme("noddi_a");
  Rng rng = make_rng(7);
  NoddiGroundTruth t{0.6, 0.1, 0.3, random_unit_vector(rng)};
  const auto f = fit_noddi(noddi_signals(t, s), s);
  CHECK(std::abs(f.icvf - t.icvf) < 0.02);
  CHECK(std::abs(f.isovf - t.isovf) < 0.02);
  CHECK(std::abs(f.odi - t.odi) < 0.02);
  CHECK(f.mu.z() >= 0.0);

  SUBCASE("objective never increases") {
    for (std::size_t i = 1; i < f.objective_history.size(); ++i) {
      CHECK(f.objective_history[i] <= f.objective_history[i - 1]);
    }
  }
  SUBCASE("snr 50") {
    SimConfig c = SimConfig::noddi();
    c.snr = 50.0;
    const auto noisy = analytic_signals(t, s, c, rng);
    const auto g = fit_noddi(noisy.values, s);
    CHECK(std::abs(g.icvf - t.icvf) < 0.1);
    CHECK(std::abs(g.isovf - t.isovf) < 0.1);
    CHECK(std::abs(g.odi - t.odi) < 0.1);
  }
}

TEST_CASE("fit_noddi needs two shells") {
  const auto s = builtin_scheme("dti_a");
  std::vector<double> sig(s.size(), 0.5);
  CHECK_THROWS_AS(fit_noddi(sig, s), DataError);
}
