#include <doctest.h>

#include <cmath>
#include <random>

#include "rwre/geometry.hpp"

using namespace rwre;

namespace {

Eigen::VectorXi vec(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("ladder for (2,1) takes the e1 steps first") {
  const Direction dir = make_direction(vec({2, 1}), 0.0);
  CHECK(dir.l1() == 3);
  CHECK(dir.norm() == doctest::Approx(std::sqrt(5.0)));
  REQUIRE(dir.ladder().size() == 3);
  CHECK(dir.ladder()[0] == step_index(0, 1));
  CHECK(dir.ladder()[1] == step_index(0, 1));
  CHECK(dir.ladder()[2] == step_index(1, 1));
  CHECK(dir.step_alphabet() == std::vector<int>{step_index(0, 1), step_index(1, 1)});
}

TEST_CASE("single-step ladder in three dimensions") {
  const Direction dir = make_direction(vec({1, 0, 0}), 0.5);
  REQUIRE(dir.ladder().size() == 1);
  CHECK(dir.ladder()[0] == step_index(0, 1));
  CHECK(dir.step_alphabet().size() == 1);
}

TEST_CASE("zeta 0.9 rejects (1,1)") {
  // first partial sum (1,0): 1 < 0.9 * sqrt(2)
  CHECK(1.0 < 0.9 * std::sqrt(2.0));
  CHECK_THROWS_AS(make_direction(vec({1, 1}), 0.9), Error);
  try {
    make_direction(vec({1, 1}), 0.9);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZetaTooLarge);
  }
}

TEST_CASE("zero direction and bad zeta") {
  try {
    make_direction(vec({0, 0}), 0.0);
    FAIL("expected ZeroDirection");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroDirection);
  }
  CHECK_THROWS_AS(make_direction(vec({1, 0}), 1.0), Error);
  CHECK_THROWS_AS(make_direction(vec({1, 0}), -0.1), Error);
}

TEST_CASE("leading zero coordinate rotates the axis order") {
  const Direction dir = make_direction(vec({0, -2, 1}), 0.0);
  CHECK(dir.axis_order().front() == 1);
  Eigen::VectorXi sum = Eigen::VectorXi::Zero(3);
  for (int s : dir.ladder()) sum += unit_step(3, s);
  CHECK(sum == dir.ell());
  CHECK(dir.ladder().front() == step_index(1, -1));
}

TEST_CASE("cone membership examples") {
  const Direction e1 = make_direction(vec({1, 0}), 0.0);
  const Cone half(Site::Zero(2), e1, 0.0);
  CHECK_FALSE(cone_contains(half, vec({-1, 0})));
  CHECK(cone_contains(half, vec({0, 0})));

  const Direction diag = make_direction(vec({1, 1}), 0.0);
  const Cone c(Site::Zero(2), diag, 0.5);
  CHECK(cone_contains(c, vec({1, 0})));
  CHECK(cone_contains(c, vec({0, 0})));
  CHECK_THROWS_AS(cone_contains(c, vec({1, 0, 0})), Error);
}

TEST_CASE("cone margin examples") {
  const Direction e1 = make_direction(vec({1, 0}), 0.0);
  CHECK(cone_margin(Cone(vec({2, 3}), e1, 0.0), vec({2, 3})) == 0.0);
  CHECK(cone_margin(Cone(Site::Zero(2), e1, 0.0), vec({3, 4})) == 3.0);
  CHECK(cone_margin(Cone(Site::Zero(2), e1, 0.2), vec({3, 4})) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("exact boundary points decide without rounding") {
  // (3,4) . (1,0) = 3 = 0.6 * 5 * 1 exactly on the boundary.
  const Direction e1 = make_direction(vec({1, 0}), 0.0);
  CHECK(cone_contains(Cone(Site::Zero(2), e1, 0.6), vec({3, 4})));
  CHECK_FALSE(cone_contains(Cone(Site::Zero(2), e1, 0.61), vec({3, 4})));
}

TEST_CASE("half-space reduction, margin sign and shift covariance") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> coord(-50, 50);
  std::uniform_int_distribution<int> small(-3, 3);
  std::uniform_real_distribution<double> zeta_dist(0.0, 0.6);
  int checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXi ell(2);
    do {
      ell << small(gen), small(gen);
    } while ((ell.array() == 0).all());
    Eigen::VectorXi y(2), x(2);
    y << coord(gen), coord(gen);
    x << coord(gen), coord(gen);
    const Direction dir = make_direction(ell, 0.0);
    const double zeta = zeta_dist(gen);

    const Cone half(Site::Zero(2), dir, 0.0);
    CHECK(cone_contains(half, y) == (y.dot(ell) >= 0));

    const Cone c0(Site::Zero(2), dir, zeta);
    const Cone cx(x, dir, zeta);
    CHECK(cone_contains(cx, y) == cone_contains(c0, Eigen::VectorXi(y - x)));

    // Away from the boundary the floating margin must agree with membership.
    const double m = cone_margin(c0, y);
    if (std::abs(m) > 1e-9) {
      CHECK((m >= 0.0) == cone_contains(c0, y));
      ++checked;
    }
  }
  CHECK(checked > 9000);
}

TEST_CASE("every accepted direction has its ladder inside the cone") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> small(-4, 4);
  std::uniform_real_distribution<double> zeta_dist(0.0, 0.95);
  int accepted = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXi ell(3);
    ell << small(gen), small(gen), small(gen);
    if ((ell.array() == 0).all()) continue;
    const double zeta = zeta_dist(gen);
    try {
      const Direction dir = make_direction(ell, zeta);
      ++accepted;
      CHECK(static_cast<std::int64_t>(dir.ladder().size()) == dir.l1());
      const Cone c(Site::Zero(3), dir, zeta);
      Eigen::VectorXi partial = Eigen::VectorXi::Zero(3);
      for (int s : dir.ladder()) {
        CHECK(dir.in_alphabet(s));
        partial += unit_step(3, s);
        const double lhs = partial.cast<double>().dot(ell.cast<double>());
        const double rhs = zeta * partial.cast<double>().norm() * ell.cast<double>().norm();
        CHECK(lhs >= rhs - 1e-9);
        CHECK(cone_contains(c, partial));
      }
      CHECK(partial == ell);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ZetaTooLarge);
    }
  }
  CHECK(accepted > 100);
}
