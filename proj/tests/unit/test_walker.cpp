#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rwre/walker.hpp"

using namespace rwre;

namespace {

Eigen::VectorXi vec(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

const TransitionKernel kDrift03{0.4, 0.1, 0.25, 0.25};

// Random kernel with every entry on E at least kappa.
TransitionKernel random_valid_kernel(std::mt19937_64& gen, const Direction& dir, double kappa) {
  std::gamma_distribution<double> g(1.0, 1.0);
  const int n = 2 * dir.dim();
  const double free = 1.0 - kappa * static_cast<double>(dir.step_alphabet().size()) - 1e-3 * n;
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p(i) = g(gen);
  p *= free / p.sum();
  p.array() += 1e-3;
  for (int s : dir.step_alphabet()) p(s) += kappa;
  return TransitionKernel(p);
}

Direction random_direction(std::mt19937_64& gen, int d) {
  std::uniform_int_distribution<int> c(-2, 2);
  Eigen::VectorXi ell(d);
  do {
    for (int i = 0; i < d; ++i) ell(i) = c(gen);
  } while ((ell.array() == 0).all());
  return make_direction(ell, 0.0);
}

}  // namespace

TEST_CASE("coupled step distribution examples") {
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  const auto forced = coupled_step_distribution(kDrift03, static_cast<Mark>(step_index(0, 1)), 0.1, dir);
  CHECK(forced.probs == TransitionKernel::point_mass(2, 0).probs);

  const auto free = coupled_step_distribution(kDrift03, kFreeMark, 0.1, dir);
  CHECK(free[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(free[1] == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(free[2] == doctest::Approx(5.0 / 18.0).epsilon(1e-15));
  CHECK(free[3] == doctest::Approx(5.0 / 18.0).epsilon(1e-15));
  const Eigen::VectorXd back = 0.1 * forced.probs + 0.9 * free.probs;
  CHECK((back - kDrift03.probs).cwiseAbs().maxCoeff() <= 1e-16);

  try {
    coupled_step_distribution(TransitionKernel{0.05, 0.35, 0.3, 0.3}, kFreeMark, 0.1, dir);
    FAIL("expected KappaTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KappaTooLarge);
  }
  CHECK_THROWS_AS(coupled_step_distribution(kDrift03, static_cast<Mark>(step_index(0, -1)), 0.1, dir), Error);
}

TEST_CASE("mark-averaged coupled law is the quenched kernel") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + trial % 3;
    const Direction dir = random_direction(gen, d);
    const double kappa = u(gen) * 0.9 / static_cast<double>(dir.step_alphabet().size() + 1);
    const TransitionKernel k = random_valid_kernel(gen, dir, kappa);
    REQUIRE(kernel_validate(k, dir, kappa));
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(2 * d);
    double q_total = 0.0;
    std::vector<Mark> marks{kFreeMark};
    for (int s : dir.step_alphabet()) marks.push_back(static_cast<Mark>(s));
    for (Mark m : marks) {
      const double q = mark_probability(m, kappa, dir);
      q_total += q;
      mix += q * coupled_step_distribution(k, m, kappa, dir).probs;
    }
    CHECK(std::abs(q_total - 1.0) <= 1e-15);
    CHECK(total_variation(mix, k.probs) <= 1e-12);
  }
}

TEST_CASE("free-mark law keeps mass on E when the drift exceeds 2 kappa") {
  std::mt19937_64 gen(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  int checked = 0;
  while (checked < 1000) {
    const double fwd = u(gen), back = u(gen) * (1.0 - fwd);
    const double side = (1.0 - fwd - back) / 2.0;
    const TransitionKernel k{fwd, back, side, side};
    const double delta = fwd - back;
    if (delta <= 0.0 || back <= 0.0 || side <= 0.0) continue;
    const double kappa = 0.5 * delta * u(gen);
    if (kappa <= 0.0) continue;
    ++checked;
    CHECK(coupled_step_distribution(k, kFreeMark, kappa, dir)[0] > 0.0);
  }
}

TEST_CASE("homogeneous drift oracle") {
  const auto env = EnvironmentModel::homogeneous(TransitionKernel{0.97, 0.01, 0.01, 0.01});
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  const std::int64_t N = 10000;
  const WalkRecord rec = simulate(env, dir, 0.1, Site::Zero(2), N, WalkMode::Quenched, 5);
  const double v = rec.position(N)(0) / static_cast<double>(N);
  const double var = 0.98 - 0.96 * 0.96;
  CHECK(std::abs(v - 0.96) <= 3.0 * std::sqrt(var / N));
  CHECK(rec.marks.empty());
}

TEST_CASE("coupled walk steps follow the quenched kernel") {
  const auto env = EnvironmentModel::homogeneous(kDrift03);
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  const std::int64_t N = 1000000;
  const WalkRecord rec = simulate(env, dir, 0.1, Site::Zero(2), N, WalkMode::Coupled, 8);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  std::int64_t forced = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    const Eigen::VectorXi dx = rec.position(n + 1) - rec.position(n);
    for (int s = 0; s < 4; ++s)
      if (dx == unit_step(2, s)) counts(s) += 1.0;
    forced += rec.marks[n] != kFreeMark;
  }
  for (int s = 0; s < 4; ++s) {
    const double p = kDrift03[s];
    CHECK(std::abs(counts(s) / N - p) <= 3.0 * std::sqrt(p * (1 - p) / N));
  }
  CHECK(std::abs(forced / static_cast<double>(N) - 0.1) <= 3.0 * std::sqrt(0.09 / N));
}

TEST_CASE("simulation is deterministic in the seed") {
  const auto env = EnvironmentModel::product({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}}, {0.5, 0.5}, 3);
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  const WalkRecord a = simulate(env, dir, 0.1, Site::Zero(2), 5000, WalkMode::Coupled, 99);
  const WalkRecord b = simulate(env, dir, 0.1, Site::Zero(2), 5000, WalkMode::Coupled, 99);
  const WalkRecord c = simulate(env, dir, 0.1, Site::Zero(2), 5000, WalkMode::Coupled, 100);
  CHECK(a.positions == b.positions);
  CHECK(a.marks == b.marks);
  CHECK(a.positions != c.positions);
}

TEST_CASE("simulated paths are nearest-neighbor, mark-consistent and ladder-deterministic") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + trial % 3;
    const Direction dir = random_direction(gen, d);
    const double kappa = (0.2 + 0.7 * u(gen)) / static_cast<double>(dir.step_alphabet().size() + 1);
    std::vector<TransitionKernel> ks{random_valid_kernel(gen, dir, kappa), random_valid_kernel(gen, dir, kappa)};
    const auto env = EnvironmentModel::product(ks, {0.5, 0.5}, gen());
    const WalkRecord rec = simulate(env, dir, kappa, Site::Zero(d), 200, WalkMode::Coupled, gen());
    const Cone probe(Site::Zero(d), dir, 0.0);
    for (std::int64_t n = 0; n < rec.horizon; ++n) {
      const Eigen::VectorXi dx = rec.position(n + 1) - rec.position(n);
      REQUIRE(dx.cwiseAbs().sum() == 1);
      if (rec.marks[n] != kFreeMark) {
        CHECK(dir.in_alphabet(rec.marks[n]));
        CHECK(dx == unit_step(d, rec.marks[n]));
      }
    }
    // Whenever the marks spell a full ladder the walk moves by ell inside the cone.
    const int L = static_cast<int>(dir.l1());
    for (std::int64_t n = 0; n + L <= rec.horizon; ++n) {
      bool ladder = true;
      for (int i = 0; i < L && ladder; ++i) ladder = rec.marks[n + i] == dir.ladder_step(i);
      if (!ladder) continue;
      CHECK(Eigen::VectorXi(rec.position(n + L) - rec.position(n)) == dir.ell());
      const Cone c(rec.position(n), dir, 0.0);
      for (int i = 0; i <= L; ++i) CHECK(cone_contains(c, rec.position(n + i)));
    }
    CHECK_NOTHROW(WalkRecord::from_path(rec.positions, rec.marks));
  }
}

TEST_CASE("coupled mode rejects kernels below kappa on E") {
  const auto env = EnvironmentModel::homogeneous(TransitionKernel{0.05, 0.35, 0.3, 0.3});
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  CHECK_THROWS_AS(simulate(env, dir, 0.1, Site::Zero(2), 10, WalkMode::Coupled, 1), Error);
  CHECK_NOTHROW(simulate(env, dir, 0.1, Site::Zero(2), 10, WalkMode::Quenched, 1));
}

TEST_CASE("exit time examples") {
  Eigen::MatrixXi path(2, 8);
  path << 0, 1, 2, 1, 2, 3, 4, 5,
          0, 0, 0, 0, 0, 0, 0, 0;
  const WalkRecord rec = WalkRecord::from_path(path);
  CHECK(exit_time(rec, [](auto x) { return (x.array() == 0).all(); }) == 1);
  CHECK(exit_time(rec, [](auto x) { return x(0) < 4; }) == 6);
  CHECK_FALSE(exit_time(rec, [](auto) { return true; }).has_value());
  // replay oracle on a simulated drifting path
  const auto env = EnvironmentModel::homogeneous(kDrift03);
  const Direction dir = make_direction(vec({1, 0}), 0.0);
  const WalkRecord sim = simulate(env, dir, 0.1, Site::Zero(2), 2000, WalkMode::Quenched, 4);
  std::int64_t first = -1;
  for (std::int64_t n = 0; n <= sim.horizon && first < 0; ++n)
    if (sim.position(n)(0) >= 5) first = n;
  CHECK(exit_time(sim, [](auto x) { return x(0) < 5; }) == first);
}

TEST_CASE("path validation and CSV dump") {
  Eigen::MatrixXi jump(2, 2);
  jump << 0, 2, 0, 0;
  CHECK_THROWS_AS(WalkRecord::from_path(jump), Error);
  Eigen::MatrixXi ok(2, 3);
  ok << 0, 1, 1, 0, 0, 1;
  CHECK_THROWS_AS(WalkRecord::from_path(ok, {static_cast<Mark>(step_index(1, 1)), kFreeMark}), Error);
  const WalkRecord rec = WalkRecord::from_path(ok, {static_cast<Mark>(step_index(0, 1)), kFreeMark});
  std::ostringstream os;
  write_path_csv(rec, os);
  CHECK(os.str() == "n,x1,x2,eps\n0,0,0,0\n1,1,0,1\n2,1,1,0\n");
}
