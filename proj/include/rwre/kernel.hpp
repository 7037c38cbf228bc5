#pragma once

#include <cstdint>
#include <initializer_list>

#include <Eigen/Core>

#include "rwre/geometry.hpp"

namespace rwre {

/// omega(x, x + e) over the 2d unit steps, indexed as in `step_index`.
struct TransitionKernel {
  Eigen::VectorXd probs;

  TransitionKernel() = default;
  explicit TransitionKernel(Eigen::VectorXd p) : probs(std::move(p)) {}
  TransitionKernel(std::initializer_list<double> p) : probs(static_cast<Eigen::Index>(p.size())) {
    Eigen::Index i = 0;
    for (double v : p) probs(i++) = v;
  }

  int dim() const noexcept { return static_cast<int>(probs.size() / 2); }
  double operator[](int step) const { return probs(step); }

  static TransitionKernel uniform(int dim) {
    return TransitionKernel(Eigen::VectorXd::Constant(2 * dim, 1.0 / (2 * dim)));
  }
  static TransitionKernel point_mass(int dim, int step) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2 * dim);
    p(step) = 1.0;
    return TransitionKernel(std::move(p));
  }
};

inline constexpr double kSumTolerance = 1e-12;

/// Nonnegative entries summing to one within 1e-12.
bool is_probability_vector(const TransitionKernel& k);

/// Probability vector, elliptic (all entries > 0) and min over E of probs >= kappa.
/// False when kappa is outside (0, 1/|E|).
bool kernel_validate(const TransitionKernel& k, const Direction& dir, double kappa);

/// sum_e e * probs(e).
Eigen::VectorXd local_drift(const TransitionKernel& k);

/// An epsilon mark: a step index from the alphabet E, or kFreeMark for epsilon = 0.
using Mark = std::int8_t;
inline constexpr Mark kFreeMark = -1;

/// One-step law of the coupled chain given the mark:
/// a point mass on a forced step, otherwise [probs(e) - kappa 1{e in E}] / (1 - kappa |E|).
TransitionKernel coupled_step_distribution(const TransitionKernel& k, Mark mark, double kappa,
                                           const Direction& dir);

/// Q(epsilon = mark).
double mark_probability(Mark mark, double kappa, const Direction& dir);

/// sup_A |p(A) - q(A)| = 1/2 sum |p - q|.
template <typename A, typename B>
double total_variation(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace rwre
