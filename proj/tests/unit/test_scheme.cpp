#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qmap/common/error.hpp"
#include "qmap/scheme/scheme.hpp"

using namespace qmap;

TEST_CASE("parse_scheme reads rows, b=0 lines and comments") {
  const auto s = parse_scheme("# header\n0 0 0 0\n0\n700 0.803 -0.064 -0.593\n");
  CHECK(s.n_b0() == 2);
  REQUIRE(s.size() == 1);
  const Eigen::Vector3d raw(0.803, -0.064, -0.593);
  CHECK(s[0].b == 700.0);
  CHECK((s[0].dir - raw.normalized()).norm() < 1e-12);
}

TEST_CASE("parse_scheme rejects a three-field row with its line number") {
  try {
    parse_scheme("0 0 0 0\n1000 1 1\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("format_scheme round trips") {
  const auto s = builtin_scheme("dti_b");
  const auto back = parse_scheme(format_scheme(s));
  REQUIRE(back.size() == s.size());
  CHECK(back.n_b0() == s.n_b0());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].b == s[i].b);
    CHECK((back[i].dir - s[i].dir).norm() < 1e-15);
  }
}

TEST_CASE("normalize_qpoints radius") {
  const GradientScheme s({{1300.0, Eigen::Vector3d::UnitZ()}, {325.0, Eigen::Vector3d::UnitX()}},
                         1);
  const auto q = normalize_qpoints(s, 1300.0);
  REQUIRE(q.size() == 2);
  CHECK((q[0].coords - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);
  CHECK((q[1].coords - Eigen::Vector3d(0.5, 0, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(normalize_qpoints(s, 1000.0), RangeError);
  CHECK_THROWS_AS(normalize_qpoints(s, 0.0), ConfigError);
}

TEST_CASE("normalize_qpoints at b=700") {
  const Eigen::Vector3d dir = Eigen::Vector3d(0.803, -0.064, -0.593).normalized();
  const GradientScheme s({{700.0, dir}}, 0);
  const auto q = normalize_qpoints(s, 1300.0);
  // sqrt(700 / 1300), evaluated independently
  CHECK((q[0].coords - 0.7337993857053428 * dir).norm() < 1e-14);
}

TEST_CASE("normalize_qpoints radius is monotone in b and skips b=0") {
  const auto s = builtin_scheme("noddi_a");
  const auto q = normalize_qpoints(s, 2300.0);
  CHECK(q.size() == s.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (s[i].b < s[j].b) CHECK(q[i].coords.norm() < q[j].coords.norm());
    }
  }
}

TEST_CASE("group_shells") {
  std::vector<Acquisition> e;
  Rng rng = make_rng(3);
  for (int i = 0; i < 64; ++i) e.push_back({2000.0, random_unit_vector(rng)});
  for (int i = 0; i < 8; ++i) e.push_back({300.0, random_unit_vector(rng)});
  for (int i = 0; i < 32; ++i) e.push_back({700.0, random_unit_vector(rng)});
  const auto shells = group_shells(GradientScheme(e, 0), 50.0);
  REQUIRE(shells.size() == 3);
  CHECK(shells.shells[0].b == doctest::Approx(300.0));
  CHECK(shells.shells[1].b == doctest::Approx(700.0));
  CHECK(shells.shells[2].b == doctest::Approx(2000.0));
  CHECK(shells.shells[0].members.size() == 8);
  CHECK(shells.shells[2].members.size() == 64);

  const GradientScheme near({{690.0, Eigen::Vector3d::UnitX()}, {710.0, Eigen::Vector3d::UnitY()}},
                            0);
  const auto one = group_shells(near, 50.0);
  REQUIRE(one.size() == 1);
  CHECK(one.shells[0].b == doctest::Approx(700.0));
}

TEST_CASE("condition_number: coplanar directions are rank deficient") {
  std::vector<Eigen::Vector3d> d;
  for (int i = 0; i < 6; ++i) {
    const double a = i * M_PI / 6.0;
    d.emplace_back(std::cos(a), std::sin(a), 0.0);
  }
  CHECK(std::isinf(condition_number(d)));
}

TEST_CASE("condition_number of the builtin schemes") {
  // Frozen from an independent SVD of the 6-column design matrix.
  CHECK(condition_number(builtin_scheme("dti_a")) == doctest::Approx(1.5847443589255892).epsilon(1e-12));
  CHECK(condition_number(builtin_scheme("dti_b")) == doctest::Approx(1.611551259807033).epsilon(1e-12));
  CHECK(condition_number(builtin_scheme("noddi_a")) == doctest::Approx(1.5817214436768277).epsilon(1e-12));
}

TEST_CASE("condition_number is invariant to row permutation and sign flips") {
  const auto s = builtin_scheme("dti_a");
  std::vector<Eigen::Vector3d> d;
  for (const auto& e : s.entries()) d.push_back(e.dir);
  const double ref = condition_number(d);
  Rng rng = make_rng(11);
  std::shuffle(d.begin(), d.end(), rng);
  for (std::size_t i = 0; i < d.size(); i += 3) d[i] = -d[i];
  CHECK(condition_number(d) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("select_subset") {
  const auto s = builtin_scheme("dti_a");
  SubsetOptions opts;
  opts.seed = 5;

  SUBCASE("k equal to the shell size returns the scheme") {
    CHECK(select_subset(s, s.size(), opts) == s);
  }
  SUBCASE("deterministic for a fixed seed") {
    CHECK(select_subset(s, 6, opts) == select_subset(s, 6, opts));
  }
  SUBCASE("no worse than the mean of random subsets") {
    const double best = condition_number(select_subset(s, 6, opts));
    Rng rng = make_rng(99);
    std::vector<std::size_t> idx(s.size());
    double sum = 0.0;
    int finite = 0;
    for (int t = 0; t < 500; ++t) {
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      const double c = condition_number(s.subset(std::span(idx).first(6)));
      if (std::isfinite(c)) {
        sum += c;
        ++finite;
      }
    }
    CHECK(best <= sum / finite);
  }
  SUBCASE("never worse than its first candidate") {
    SubsetOptions first = opts;
    first.n_candidates = 1;
    CHECK(condition_number(select_subset(s, 6, opts)) <=
          condition_number(select_subset(s, 6, first)));
  }
  SUBCASE("k larger than the shell") {
    CHECK_THROWS_AS(select_subset(s, 33, opts), DataError);
  }
}

TEST_CASE("GradientScheme validation") {
  CHECK_THROWS_AS(GradientScheme({{700.0, Eigen::Vector3d(1, 1, 0)}}, 0), DataError);
  CHECK_THROWS_AS(GradientScheme({}, 1), DataError);
}
