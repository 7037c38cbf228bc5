#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rwre/environment.hpp"
#include "rwre/kalikow.hpp"

using namespace rwre;

namespace {

Direction e1_dir(int d = 2) {
  Eigen::VectorXi ell = Eigen::VectorXi::Zero(d);
  ell(0) = 1;
  return make_direction(ell, 0.0);
}

const TransitionKernel kDrift03{0.4, 0.1, 0.25, 0.25};

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TransitionKernel random_kernel(std::mt19937_64& gen, int d) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::VectorXd p(2 * d);
  for (int i = 0; i < 2 * d; ++i) p(i) = g(gen) + 1e-3;
  return TransitionKernel(p / p.sum());
}

}  // namespace

TEST_CASE("kernel_validate examples") {
  const Direction dir = e1_dir();
  CHECK(kernel_validate(kDrift03, dir, 0.1));
  CHECK_FALSE(kernel_validate(kDrift03, dir, 0.5));
  CHECK_FALSE(kernel_validate(TransitionKernel{0.5, 0.2, 0.3, 0.0}, dir, 0.1));
  CHECK_FALSE(kernel_validate(TransitionKernel{0.5, 0.2, 0.3, 0.1}, dir, 0.1));  // sum 1.1
}

TEST_CASE("local_drift examples and the l1 bound") {
  CHECK(local_drift(TransitionKernel::uniform(3)).isZero(0.0));
  const Eigen::VectorXd v = local_drift(kDrift03);
  CHECK(v(0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(v(1) == 0.0);
  CHECK(local_drift(TransitionKernel{1.0, 0.0, 0.0, 0.0}) == Eigen::Vector2d(1.0, 0.0));
  std::mt19937_64 gen(3);
  for (int i = 0; i < 1000; ++i) CHECK(local_drift(random_kernel(gen, 3)).lpNorm<1>() <= 1.0 + 1e-15);
}

TEST_CASE("check_non_nestling") {
  const Direction dir = e1_dir();
  CHECK(check_non_nestling(EnvironmentModel::homogeneous(kDrift03), dir, 0.3));
  CHECK_FALSE(check_non_nestling(EnvironmentModel::homogeneous(kDrift03), dir, 0.31));
  // 0.35 - 0.15 rounds below 0.2
  CHECK(check_non_nestling(EnvironmentModel::homogeneous(TransitionKernel{0.35, 0.15, 0.25, 0.25}), dir, 0.2));
  CHECK_FALSE(check_non_nestling(EnvironmentModel::homogeneous(TransitionKernel{0.35, 0.15, 0.25, 0.25}), dir, 0.2 + 1e-9));
  IsingParams ip;
  const auto ising = EnvironmentModel::ising_two_kernel(ip, TransitionKernel{0.4, 0.2, 0.2, 0.2},
                                                        TransitionKernel{0.2, 0.4, 0.2, 0.2}, 1);
  CHECK_FALSE(check_non_nestling(ising, dir, 0.0));
  const auto prod = EnvironmentModel::product({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}},
                                              {0.5, 0.5}, 9);
  CHECK(check_non_nestling(prod, dir, 0.0));
}

TEST_CASE("ising_conditional examples") {
  IsingParams p;
  p.beta = 0.0;
  p.h = 0.5;
  CHECK(ising_conditional(p, 0) ==
        doctest::Approx(std::exp(0.5) / (std::exp(0.5) + std::exp(-0.5))).epsilon(1e-15));
  CHECK(ising_conditional(p, 4) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  p.beta = 0.1;
  p.dim = 1;
  CHECK(ising_conditional(p, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-1.4))).epsilon(1e-15));
  CHECK(ising_conditional(p, 2) == doctest::Approx(0.8022).epsilon(1e-4));
  p.beta = 0.0;
  p.h = 0.0;
  CHECK(ising_conditional(p, 0) == 0.5);
  CHECK_THROWS_AS(ising_conditional(p, 1), Error);
  CHECK_THROWS_AS(ising_conditional(p, 4), Error);
}

TEST_CASE("spin probabilities for +1 and -1 sum to one exactly") {
  IsingParams p;
  p.dim = 3;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> beta(0.0, 2.0), h(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    p.beta = beta(gen);
    p.h = h(gen);
    for (int s = -6; s <= 6; s += 2)
      CHECK(ising_spin_probability(p, s, 1) + ising_spin_probability(p, s, -1) == 1.0);
  }
}

TEST_CASE("dobrushin coefficient") {
  IsingParams p;
  p.beta = 0.0;
  CHECK(dobrushin_coefficient(p) == 0.0);
  // d = 1, h = 0: 2 (sigma(0.4) - 1/2) = tanh(0.2)
  p.dim = 1;
  p.beta = 0.1;
  CHECK(dobrushin_coefficient(p) == doctest::Approx(std::tanh(0.2)).epsilon(1e-14));
  p.dim = 2;
  double prev = 0.0;
  for (double b = 0.0; b <= 2.0; b += 0.05) {
    p.beta = b;
    const double c = dobrushin_coefficient(p);
    CHECK(c >= prev - 1e-15);
    prev = c;
  }
}

TEST_CASE("mixing_rate_bound") {
  CHECK(mixing_rate_bound(1.0, 2.5, 0.0) == 2.5);
  CHECK(mixing_rate_bound(std::sqrt(2.0), 1.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  const double r1 = mixing_rate_bound(0.7, 3.0, 4.0) / 3.0;
  const double r2 = mixing_rate_bound(0.7, 3.0, 8.0) / 3.0;
  CHECK(r2 == doctest::Approx(r1 * r1).epsilon(1e-14));
  CHECK_THROWS_AS(mixing_rate_bound(0.0, 1.0, 1.0), Error);
}

TEST_CASE("glauber at beta = 0 is i.i.d. after one sweep") {
  IsingParams p;
  p.beta = 0.0;
  p.h = 0.4;
  p.box = {32, 32};
  p.burn_in_sweeps = 1;
  double sum = 0.0;
  const int samples = 50;
  for (int s = 0; s < samples; ++s) sum += glauber_sample(p, 100 + s).magnetization();
  const double mean = sum / samples;
  const double se = std::sqrt((1.0 - std::tanh(0.4) * std::tanh(0.4)) / (1024.0 * samples));
  CHECK(std::abs(mean - std::tanh(0.4)) <= 3.0 * se);
}

TEST_CASE("glauber on a 3x3 box matches exact enumeration") {
  IsingParams p;
  p.beta = 0.2;
  p.h = 0.3;
  p.box = {3, 3};
  p.burn_in_sweeps = 20;
  // Exact marginals: weight exp(beta sum_{<xy>} s_x s_y + h sum s_x) with + spins outside.
  std::vector<double> exact(9, 0.0);
  double Z = 0.0;
  for (int mask = 0; mask < 512; ++mask) {
    auto s = [&](int x, int y) {
      if (x < 0 || x > 2 || y < 0 || y > 2) return 1;
      return (mask >> (x + 3 * y)) & 1 ? 1 : -1;
    };
    double e = 0.0;
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y) {
        e += p.h * s(x, y);
        e += p.beta * s(x, y) * (s(x + 1, y) + s(x, y + 1));
        if (x == 0) e += p.beta * s(x, y);
        if (y == 0) e += p.beta * s(x, y);
      }
    const double w = std::exp(e);
    Z += w;
    for (int i = 0; i < 9; ++i)
      if ((mask >> i) & 1) exact[i] += w;
  }
  std::vector<double> hits(9, 0.0);
  const int samples = 100000;
  for (int n = 0; n < samples; ++n) {
    const SpinField f = glauber_sample(p, 7000 + n);
    for (int i = 0; i < 9; ++i) hits[i] += f.spins[i] > 0;
  }
  for (int i = 0; i < 9; ++i) CHECK(std::abs(hits[i] / samples - exact[i] / Z) <= 0.01);
}

TEST_CASE("saturated field gives all plus") {
  IsingParams p;
  p.beta = 0.3;
  p.h = 50.0;
  p.box = {4, 4};
  for (int n = 0; n < 1000; ++n) CHECK(glauber_sample(p, n).magnetization() == 1.0);
}

TEST_CASE("spin CSV export") {
  IsingParams p;
  p.box = {2, 2};
  std::ostringstream os;
  write_spin_csv(glauber_sample(p, 1), os);
  const std::string s = os.str();
  CHECK(s.rfind("x1,x2,spin\n0,0,", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 5);
}

TEST_CASE("lazy Ising field is exact against a large finite box") {
  IsingParams p;
  p.beta = 0.35;
  p.h = 0.2;
  p.burn_in_sweeps = 3;
  p.box = {60, 60};
  const std::uint64_t seed = 42;
  const SpinField box = glauber_sample(p, seed);
  LazyIsingField lazy(p, seed);
  // sites farther than 2T + 1 from the frame see no boundary effect
  for (int x = 8; x < 52; ++x)
    for (int y = 8; y < 52; ++y) {
      Eigen::VectorXi z(2);
      z << x, y;
      const int expect = box.at({x, y});
      CHECK(lazy.spin_at(z) == expect);
      if ((x + y) % 17 == 0) CHECK(LazyIsingField::spin_exact(p, seed, z) == expect);
    }
  CHECK(lazy.tiles_computed() >= 4);
}

TEST_CASE("environment kernels are pure functions of seed and site") {
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<int> c(-1000, 1000);
  IsingParams ip;
  ip.beta = 0.2;
  ip.h = 0.4;
  ip.burn_in_sweeps = 2;
  const std::vector<EnvironmentModel> models = {
      EnvironmentModel::product({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}}, {0.3, 0.7}, 5),
      EnvironmentModel::block_independent({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}}, {0.5, 0.5}, 4, 5),
      EnvironmentModel::ising_two_kernel(ip, TransitionKernel{0.4, 0.2, 0.2, 0.2},
                                         TransitionKernel{0.2, 0.4, 0.2, 0.2}, 5)};
  for (const auto& m : models) {
    EnvironmentCursor cursor(m);
    const int n = m.kind() == EnvironmentKind::IsingTwoKernel ? 500 : 10000;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXi z(2);
      z << c(gen), c(gen);
      const std::size_t a = m.kernel_index_at(z);
      CHECK(a == m.kernel_index_at(z));
      CHECK(cursor.index_at(z) == a);
      CHECK(m.kernel_at(z).probs == m.support()[a].probs);
    }
  }
}

TEST_CASE("product kernels at distinct sites are uncorrelated") {
  const auto m = EnvironmentModel::product({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}}, {0.5, 0.5}, 77);
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> c(-500, 500), off(1, 6);
  std::vector<double> a, b;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXi z(2), w(2);
    z << c(gen), c(gen);
    w = z;
    w(i % 2) += off(gen);
    a.push_back(m.kernel_at(z)[0]);
    b.push_back(m.kernel_at(w)[0]);
  }
  CHECK(std::abs(pearson(a, b)) <= 3.0 / std::sqrt(10000.0));
  // weights respected
  double share = 0.0;
  for (double v : a) share += v == 0.4;
  CHECK(std::abs(share / 10000.0 - 0.5) <= 3.0 * 0.5 / 100.0);
}

TEST_CASE("block-independent model is constant on blocks and independent across them") {
  const int side = 4;
  const auto m = EnvironmentModel::block_independent({kDrift03, TransitionKernel{0.5, 0.1, 0.3, 0.1}},
                                                     {0.5, 0.5}, side, 78);
  std::mt19937_64 gen(19);
  std::uniform_int_distribution<int> block(-200, 200), in(0, side - 1);
  std::vector<double> a, b;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXi base(2), z(2), w(2), far(2);
    base << block(gen) * side, block(gen) * side;
    z = base + Eigen::Vector2i(in(gen), in(gen));
    w = base + Eigen::Vector2i(in(gen), in(gen));
    CHECK(m.kernel_index_at(z) == m.kernel_index_at(w));
    far = base + Eigen::Vector2i(in(gen), in(gen));
    far(i % 2) += side;
    a.push_back(m.kernel_at(z)[0]);
    b.push_back(m.kernel_at(far)[0]);
  }
  CHECK(std::abs(pearson(a, b)) <= 3.0 / std::sqrt(10000.0));
}

TEST_CASE("environment construction errors") {
  CHECK_THROWS_AS(EnvironmentModel::product({kDrift03}, {0.5, 0.5}, 1), Error);
  CHECK_THROWS_AS(EnvironmentModel::product({kDrift03, TransitionKernel{0.5, 0.5, 0.1}}, {1, 1}, 1), Error);
  CHECK_THROWS_AS(EnvironmentModel::homogeneous(TransitionKernel{0.5, 0.6, 0.0, 0.0}), Error);
  IsingParams ip;
  ip.dim = 3;
  CHECK_THROWS_AS(EnvironmentModel::ising_two_kernel(ip, kDrift03, kDrift03, 1), Error);
}

TEST_CASE("arithmetic sufficient condition examples") {
  const TransitionKernel plus{0.4, 0.2, 0.2, 0.2}, minus{0.2, 0.4, 0.2, 0.2};
  const DriftReport r = kalikow_sufficient_check(plus, minus, 0.1, 0.1, 1.3, 2);
  CHECK(r.d_plus == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(r.d_minus == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(r.rhs == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(r.lhs == doctest::Approx(1.8).epsilon(1e-14));
  CHECK(r.passes_L54);
  CHECK_FALSE(r.passes_A4);
  CHECK_FALSE(kalikow_sufficient_check(plus, minus, 0.25, 0.1, 1.3, 2).passes_L54);
  CHECK(kalikow_sufficient_check(plus, minus, 0.1, 0.0, 10.0, 2).passes_L54);
  try {
    kalikow_sufficient_check(minus, plus, 0.1, 0.1, 1.3, 2);
    FAIL("expected NonPositiveDrift");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonPositiveDrift);
  }
}

TEST_CASE("conditional-expectation ratio examples") {
  const TransitionKernel plus{0.4, 0.2, 0.2, 0.2}, minus{0.2, 0.4, 0.2, 0.2};
  // equal kernels: the ratio collapses to the drift
  CHECK(kalikow_cs_lhs(kDrift03, kDrift03, 0.3, 0.2, 2, 6) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(kalikow_cs_lhs(plus, minus, 0.1, 1.3, 2, 8) >= 0.1);

  // beta = 0: fixed mixture weight p; the ratio depends on f only through
  // rho = <f, omega+>/<f, omega->, which ranges over [min, max] of omega+/omega-.
  const TransitionKernel a{0.5, 0.1, 0.25, 0.15}, b{0.25, 0.35, 0.1, 0.3};
  const double h = 0.7;
  IsingParams ip;
  ip.h = h;
  const double p = ising_conditional(ip, 0);
  const double dp = 0.4, dm = -0.1;
  const Eigen::ArrayXd ratio = a.probs.array() / b.probs.array();
  double scan = 1e300;
  for (int i = 0; i <= 100000; ++i) {
    const double rho = ratio.minCoeff() + (ratio.maxCoeff() - ratio.minCoeff()) * i / 100000.0;
    scan = std::min(scan, (p * dp + (1 - p) * dm * rho) / (p + (1 - p) * rho));
  }
  CHECK(kalikow_cs_lhs(a, b, 0.0, h, 2, 6) == doctest::Approx(scan).epsilon(1e-9));
}

TEST_CASE("arithmetic condition implies the ratio bound on random draws") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int passing = 0;
  while (passing < 20) {
    const double fwd = 0.3 + 0.4 * u(gen), back = 0.02 + 0.15 * u(gen);
    const double side = (1.0 - fwd - back) / 2.0;
    const TransitionKernel plus{fwd, back, side, side};
    const double fwd2 = 0.05 + 0.2 * u(gen), back2 = 0.3 + 0.3 * u(gen);
    const double s2 = (1.0 - fwd2 - back2) * u(gen);
    const TransitionKernel minus{fwd2, back2, s2, 1.0 - fwd2 - back2 - s2};
    if (minus[3] <= 0.0) continue;
    const double dplus = fwd - back;
    const double delta = dplus * u(gen);
    const double beta = 0.3 * u(gen), h = 4.0 * u(gen);
    DriftReport r;
    try {
      r = kalikow_sufficient_check(plus, minus, delta, beta, h, 2);
    } catch (const Error&) {
      continue;
    }
    if (!r.passes_L54) continue;
    ++passing;
    CHECK(kalikow_cs_lhs(plus, minus, beta, h, 2, 6) >= delta - 1e-6);
  }
}
