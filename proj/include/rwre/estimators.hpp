#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rwre/environment.hpp"
#include "rwre/regeneration.hpp"

namespace rwre {

/// phi'(L) = 2 phi(L) / (p_D - phi(L)). Throws RateTooLarge unless 0 <= phi_L < p_D <= 1.
double phi_prime(double phi_L, double p_D);

struct VelocityEstimate {
  Eigen::VectorXd v_hat;     // sum_k X-bar_k / sum_k tau-bar_k, pooled over replicas
  Eigen::VectorXd v_direct;  // sum (X_N - X_0) / sum N
  Eigen::VectorXd se;        // jackknife, v_hat
  Eigen::VectorXd se_direct; // jackknife, v_direct
  Eigen::VectorXd combined_se;
  std::int64_t n_blocks = 0;
  std::int64_t n_replicas = 0;
  int L = 0;
  double censor_rate = 0.0;  // censored candidates / (blocks + censored candidates)
};

/// Throws NoBlocks when no replica contributes a complete block.
VelocityEstimate estimate_velocity(const std::vector<BlockSeries>& blocks);

struct MomentReport {
  int L = 0;
  double alpha = 2.0;
  double kappa = 0.0;
  std::int64_t n_replicas = 0;
  std::int64_t n_survivors = 0;
  double M_hat = 0.0;            // E[(tau-bar_1)^alpha | D' = infinity]
  double M_se = 0.0;
  double beta_hat = 0.0;         // E[tau-bar_1 | D' = infinity]
  double beta_se = 0.0;
  Eigen::VectorXd gamma_hat;     // E[X-bar_1 | D' = infinity]
  Eigen::VectorXd gamma_se;
  Eigen::VectorXd v_hat;         // pooled block velocity of the same replicas
  Eigen::VectorXd identity_residual;  // gamma_hat - beta_hat v_hat
  Eigen::VectorXd identity_se;
  double p_D_survive = 0.0;
  double phi_L = 0.0;
  double phi_prime_L = 0.0;
  double product = 0.0;          // phi'^{1/alpha'} M^{1/alpha}
  double eta_L = 0.0;            // 2 M^{1/alpha} phi'^{1/alpha'}
};

/// Survivors are replicas whose walk never left C(X_0, ell, zeta) and that have a tau_1.
/// Throws InvalidArgument for alpha <= 1, NoSurvivors, RateTooLarge.
MomentReport estimate_moments(const std::vector<RegenSequence>& seqs, double alpha, double kappa,
                              double phi_L);

struct KalikowSite {
  Site x;
  std::int64_t visits = 0;
  Eigen::VectorXd probs;  // P-hat_U(x, x + e)
  Eigen::VectorXd se;
  Eigen::VectorXd drift;  // sum_e e P-hat_U(x, x + e)
};

struct KalikowEstimate {
  std::vector<Site> U;
  std::vector<KalikowSite> sites;  // visited sites only, in the order of U
  std::int64_t replicas = 0;
};

/// One replica's occupation sums inside U: visits and sum of omega(x, .) per site of U.
struct KalikowReplica {
  std::int64_t exit_time = 0;
  std::vector<std::int64_t> visits;
  Eigen::MatrixXd weight;  // 2d x |U|
};

/// Throws BadRegion unless 0 is in U and U is nearest-neighbor connected.
void check_region(const std::vector<Site>& U);

/// Fresh environment (model reseeded from (seed, replica)) and a quenched walk
/// from 0 until it leaves U.
KalikowReplica kalikow_replica(const EnvironmentModel& model, const Direction& dir,
                               const std::vector<Site>& U, std::uint64_t seed,
                               std::uint64_t replica);

KalikowEstimate kalikow_merge(const std::vector<Site>& U,
                              const std::vector<KalikowReplica>& replicas);

/// Monte Carlo occupation-weighted kernel on U, averaged over environments.
KalikowEstimate kalikow_mc(const EnvironmentModel& model, const Direction& dir, double kappa,
                           const std::vector<Site>& U, std::int64_t replicas, std::uint64_t seed);

/// Largest lambda0 (bisection, tolerance 1e-9) with
/// max_{0 < |u| <= lambda0 (3|ell| + 2)} u^{-2}(e^u - 1 - u) <= delta / (lambda0 (3|ell| + 2)^2).
double compute_lambda0(double delta, double ell_norm);

/// All y with |y|_inf <= radius inside C(0, ell, zeta).
std::vector<Site> cone_witnesses(const Direction& dir, double zeta, int radius = 10);

/// sum_e probs(e) exp(-3 lambda (f(y + e) - f(y)) + lambda delta) <= 1 at every witness y,
/// with f(y) = y . ell - zeta |y| |ell|.
bool one_step_supermartingale_check(const TransitionKernel& k, const Direction& dir, double zeta,
                                    double delta, double lambda,
                                    const std::vector<Site>& witnesses = {});

struct ExitMomentReport {
  double r = 0.0;
  double lambda = 0.0;
  double delta = 0.0;
  double estimate = 0.0;  // mean of exp(lambda delta T), T = horizon where not exited
  double se = 0.0;
  double bound = 0.0;     // exp(3 lambda r)
  std::int64_t replicas = 0;
  std::int64_t not_exited = 0;
  bool passes = false;    // estimate - 3 se <= bound
};

/// First n with X_n . ell >= r for a coupled walk from 0, or nullopt within horizon.
std::optional<std::int64_t> level_hitting_time(const EnvironmentModel& model, const Direction& dir,
                                               double kappa, double r, std::int64_t horizon,
                                               std::uint64_t seed, std::uint64_t replica);

/// Throws PreconditionFailed unless the model is non-nestling at delta,
/// delta > 2 kappa and 0 < lambda <= compute_lambda0(delta, |ell|).
void check_exit_moment_preconditions(const EnvironmentModel& model, const Direction& dir,
                                     double kappa, double delta, double lambda);

/// Aggregates hitting times (nullopt = not exited, counted as T = horizon).
ExitMomentReport summarize_exit_moments(double r, double delta, double lambda, std::int64_t horizon,
                                        const std::vector<std::optional<std::int64_t>>& times);

/// Runs `replicas` hitting times and summarizes them; same preconditions.
ExitMomentReport exit_moment_check(const EnvironmentModel& model, const Direction& dir,
                                   double kappa, double delta, double lambda, double r,
                                   std::int64_t replicas, std::int64_t horizon, std::uint64_t seed);

/// {omega(site_i) = support[value_i] for all i}.
struct CylinderEvent {
  std::vector<Site> sites;
  std::vector<std::size_t> values;
};

/// A lives on {z . ell <= 0}; B is given relative to the vertex r ell and must lie in C(r ell, ell, zeta).
struct EventPair {
  CylinderEvent A;
  CylinderEvent B;
};

struct MixingPoint {
  int r = 0;
  double phi_hat = 0.0;  // max over pairs of |P(A and B)/P(A) - P(B)|
  double se = 0.0;       // of the maximizing pair
  std::vector<double> per_pair;
};

/// Throws DegenerateEvent when some P-hat(A) < 0.05.
std::vector<MixingPoint> cone_mixing_probe(const EnvironmentModel& model, const Direction& dir,
                                           double zeta, const std::vector<int>& r_values,
                                           const std::vector<EventPair>& events,
                                           std::int64_t samples, std::uint64_t seed);

}  // namespace rwre
