#include "rwre/kalikow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rwre/ising.hpp"

namespace rwre {

namespace {

void check_pair(const TransitionKernel& plus, const TransitionKernel& minus, int d) {
  if (plus.dim() != d || minus.dim() != d)
    throw Error(Errc::DimensionMismatch, "kernels must have dimension d");
  if (!is_probability_vector(plus) || !is_probability_vector(minus))
    throw Error(Errc::InvalidLaw, "kernels must be probability vectors");
  if ((plus.probs.array() <= 0.0).any() || (minus.probs.array() <= 0.0).any())
    throw Error(Errc::InvalidArgument, "kernels must be elliptic");
}

// Ratio of conditional expectations for one neighbor sum, as a function of f.
struct ConditionalRatio {
  double p_plus, p_minus, a_plus, a_minus;
  const Eigen::VectorXd* w_plus;
  const Eigen::VectorXd* w_minus;

  double operator()(const Eigen::VectorXd& f) const {
    const double fp = f.dot(*w_plus);
    const double fm = f.dot(*w_minus);
    return (p_plus * a_plus / fp + p_minus * a_minus / fm) / (p_plus / fp + p_minus / fm);
  }
  // Limit along f concentrated where omega+/omega- = rho.
  double at_ratio(double rho) const {
    return (p_plus * a_plus + p_minus * a_minus * rho) / (p_plus + p_minus * rho);
  }
};

}  // namespace

DriftReport kalikow_sufficient_check(const TransitionKernel& omega_plus,
                                     const TransitionKernel& omega_minus, double delta, double beta,
                                     double h, int d) {
  check_pair(omega_plus, omega_minus, d);
  DriftReport r;
  r.d_plus = local_drift(omega_plus)(0);
  r.d_minus = -local_drift(omega_minus)(0);
  r.delta = delta;
  if (r.d_plus <= 0.0 || r.d_minus <= 0.0)
    throw Error(Errc::NonPositiveDrift, "need d+ > 0 and d- > 0");
  r.passes_A4 = r.d_plus >= delta && -r.d_minus >= delta;
  const double max_ratio = (omega_plus.probs.array() / omega_minus.probs.array()).maxCoeff();
  r.lhs = 2.0 * h - 4.0 * beta * d;
  if (delta < r.d_plus) {
    r.rhs = std::log((r.d_minus + delta) / (r.d_plus - delta)) + std::log(max_ratio);
    r.passes_L54 = r.lhs >= r.rhs;
  } else {
    r.rhs = std::numeric_limits<double>::infinity();
    r.passes_L54 = false;
  }
  return r;
}

double kalikow_cs_lhs(const TransitionKernel& omega_plus, const TransitionKernel& omega_minus,
                      double beta, double h, int d, int f_grid_resolution) {
  check_pair(omega_plus, omega_minus, d);
  if (f_grid_resolution < 2) throw Error(Errc::InvalidArgument, "grid resolution must be >= 2");
  const double a_plus = local_drift(omega_plus)(0);
  const double a_minus = local_drift(omega_minus)(0);
  if (a_plus <= 0.0) throw Error(Errc::NonPositiveDrift, "omega+ must drift along +e1");

  const int n = 2 * d;
  std::vector<double> grid(f_grid_resolution);
  for (int k = 0; k < f_grid_resolution; ++k)
    grid[k] = std::pow(10.0, -3.0 * (1.0 - static_cast<double>(k) / (f_grid_resolution - 1)));
  constexpr int kLineResolution = 241;
  std::vector<double> line(kLineResolution);
  for (int k = 0; k < kLineResolution; ++k)
    line[k] = std::pow(10.0, -3.0 * (1.0 - static_cast<double>(k) / (kLineResolution - 1)));

  const Eigen::ArrayXd ratio = omega_plus.probs.array() / omega_minus.probs.array();
  IsingParams params;
  params.beta = beta;
  params.h = h;
  params.dim = d;

  // Full tensor grid only when it stays small; coordinate descent covers the rest.
  const double full_size = std::pow(static_cast<double>(f_grid_resolution), n);
  const bool full_grid = full_size <= 2.0e5;

  double best_overall = std::numeric_limits<double>::infinity();
  for (int s = -n; s <= n; s += 2) {
    ConditionalRatio R{ising_spin_probability(params, s, +1), ising_spin_probability(params, s, -1),
                       a_plus, a_minus, &omega_plus.probs, &omega_minus.probs};

    Eigen::VectorXd best_f = Eigen::VectorXd::Ones(n);
    double best = R(best_f);
    if (full_grid) {
      std::vector<int> idx(n, 0);
      Eigen::VectorXd f(n);
      const auto total = static_cast<long>(full_size);
      for (long m = 0; m < total; ++m) {
        for (int i = 0; i < n; ++i) f(i) = grid[idx[i]];
        const double v = R(f);
        if (v < best) {
          best = v;
          best_f = f;
        }
        for (int i = 0; i < n; ++i) {
          if (++idx[i] < f_grid_resolution) break;
          idx[i] = 0;
        }
      }
    } else {
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd f = Eigen::VectorXd::Constant(n, grid.front());
        f(i) = 1.0;
        const double v = R(f);
        if (v < best) {
          best = v;
          best_f = f;
        }
      }
    }

    for (int round = 0; round < 50; ++round) {
      bool improved = false;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd f = best_f;
        for (double x : line) {
          f(i) = x;
          const double v = R(f);
          if (v < best - 1e-15) {
            best = v;
            best_f = f;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }

    best = std::min({best, R.at_ratio(ratio.maxCoeff()), R.at_ratio(ratio.minCoeff())});
    best_overall = std::min(best_overall, best);
  }
  return best_overall;
}

}  // namespace rwre
