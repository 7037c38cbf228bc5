#include "rwre/kernel.hpp"

#include <cmath>

namespace rwre {

bool is_probability_vector(const TransitionKernel& k) {
  if (k.probs.size() == 0 || k.probs.size() % 2 != 0) return false;
  if (!k.probs.allFinite() || (k.probs.array() < 0.0).any()) return false;
  return std::abs(k.probs.sum() - 1.0) <= kSumTolerance;
}

bool kernel_validate(const TransitionKernel& k, const Direction& dir, double kappa) {
  if (k.dim() != dir.dim() || !is_probability_vector(k)) return false;
  const double n_alpha = static_cast<double>(dir.step_alphabet().size());
  if (!(kappa > 0.0) || !(kappa * n_alpha < 1.0)) return false;
  if ((k.probs.array() <= 0.0).any()) return false;
  for (int s : dir.step_alphabet())
    if (k.probs(s) < kappa) return false;
  return true;
}

Eigen::VectorXd local_drift(const TransitionKernel& k) {
  const int d = k.dim();
  Eigen::VectorXd drift = Eigen::VectorXd::Zero(d);
  for (int a = 0; a < d; ++a) drift(a) = k.probs(2 * a) - k.probs(2 * a + 1);
  return drift;
}

double mark_probability(Mark mark, double kappa, const Direction& dir) {
  if (mark == kFreeMark) return 1.0 - kappa * static_cast<double>(dir.step_alphabet().size());
  return dir.in_alphabet(mark) ? kappa : 0.0;
}

TransitionKernel coupled_step_distribution(const TransitionKernel& k, Mark mark, double kappa,
                                           const Direction& dir) {
  if (k.dim() != dir.dim()) throw Error(Errc::DimensionMismatch, "kernel and direction dimension");
  if (mark != kFreeMark) {
    if (!dir.in_alphabet(mark)) throw Error(Errc::InvalidArgument, "mark outside the step alphabet");
    return TransitionKernel::point_mass(k.dim(), mark);
  }
  const double mass = kappa * static_cast<double>(dir.step_alphabet().size());
  if (!(kappa > 0.0) || !(mass < 1.0))
    throw Error(Errc::KappaTooLarge, "kappa |E| must lie in (0, 1)");
  Eigen::VectorXd p = k.probs;
  for (int s : dir.step_alphabet()) {
    if (p(s) < kappa) throw Error(Errc::KappaTooLarge, "kernel entry on E below kappa");
    p(s) -= kappa;
  }
  return TransitionKernel(p / (1.0 - mass));
}

}  // namespace rwre
