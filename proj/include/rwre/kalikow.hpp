#pragma once

#include "rwre/kernel.hpp"

namespace rwre {

/// Drift bookkeeping for the two-kernel Ising environment with ell = e1.
struct DriftReport {
  double d_plus = 0.0;   // (sum_e omega+(e) e) . e1
  double d_minus = 0.0;  // -(sum_e omega-(e) e) . e1
  double delta = 0.0;
  double lhs = 0.0;      // 2h - 4 beta d
  double rhs = 0.0;      // ln((d- + delta)/(d+ - delta)) + ln max_e omega+(e)/omega-(e)
  bool passes_A4 = false;
  bool passes_L54 = false;
};

/// Arithmetic sufficient condition for the local Kalikow bound:
/// delta < d+ and 2h - 4 beta d >= ln((d- + delta)/(d+ - delta)) + ln max_e omega+(e)/omega-(e).
/// Throws NonPositiveDrift when d+ <= 0 or d- <= 0.
DriftReport kalikow_sufficient_check(const TransitionKernel& omega_plus,
                                     const TransitionKernel& omega_minus, double delta, double beta,
                                     double h, int d);

/// inf over neighbor sums s and f : {+-e_i} -> (0, 1] of
///   E[d . e1 / <f, omega> | s] / E[1 / <f, omega> | s]
/// under the single-site Ising conditional. Searched on a geometric grid in
/// [1e-3, 1] with `f_grid_resolution` points per coordinate, refined by
/// coordinate descent, and completed with the two indicator-like limits
/// f -> 1{e = argmax/argmin omega+(e)/omega-(e)}.
/// Throws NonPositiveDrift when omega+ does not drift along +e1.
double kalikow_cs_lhs(const TransitionKernel& omega_plus, const TransitionKernel& omega_minus,
                      double beta, double h, int d, int f_grid_resolution);

}  // namespace rwre
