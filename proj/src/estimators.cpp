#include "rwre/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "rwre/random.hpp"
#include "rwre/stats.hpp"
#include "rwre/walker.hpp"

namespace rwre {

double phi_prime(double phi_L, double p_D) {
  if (!(phi_L >= 0.0) || !(p_D <= 1.0)) throw Error(Errc::InvalidArgument, "need phi_L >= 0, p_D <= 1");
  if (!(phi_L < p_D)) throw Error(Errc::RateTooLarge, "phi(L) must be below P(D' = infinity)");
  return 2.0 * phi_L / (p_D - phi_L);
}

VelocityEstimate estimate_velocity(const std::vector<BlockSeries>& blocks) {
  VelocityEstimate est;
  std::int64_t total = 0;
  for (const auto& b : blocks) total += b.count();
  if (blocks.empty() || total == 0) throw Error(Errc::NoBlocks, "no complete regeneration block");
  const int d = static_cast<int>(blocks.front().final_displacement.size());
  const int L = blocks.front().L;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(blocks.size()), 2 * d + 2);
  std::int64_t censored = 0;
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const auto& b = blocks[r];
    if (b.L != L || b.final_displacement.size() != d)
      throw Error(Errc::InvalidArgument, "blocks mix block lengths or dimensions");
    const auto i = static_cast<Eigen::Index>(r);
    rows.row(i).head(d) = b.count() > 0 ? Eigen::VectorXd(b.scaled_displacements.rowwise().sum())
                                        : Eigen::VectorXd::Zero(d);
    rows(i, d) = b.scaled_durations.sum();
    rows.row(i).segment(d + 1, d) = b.final_displacement;
    rows(i, 2 * d + 1) = static_cast<double>(b.horizon);
    if (b.censored) ++censored;
  }
  auto stat = [d](const Eigen::VectorXd& s) {
    Eigen::VectorXd out(2 * d);
    out.head(d) = s.head(d) / s(d);
    out.tail(d) = s.segment(d + 1, d) / s(2 * d + 1);
    return out;
  };
  const auto [value, se] = jackknife(rows, stat);
  est.v_hat = value.head(d);
  est.v_direct = value.tail(d);
  est.se = se.head(d);
  est.se_direct = se.tail(d);
  est.combined_se = (est.se.array().square() + est.se_direct.array().square()).sqrt();
  est.n_blocks = total;
  est.n_replicas = static_cast<std::int64_t>(blocks.size());
  est.L = L;
  est.censor_rate = static_cast<double>(censored) / static_cast<double>(total + censored);
  return est;
}

MomentReport estimate_moments(const std::vector<RegenSequence>& seqs, double alpha, double kappa,
                              double phi_L) {
  if (!(alpha > 1.0)) throw Error(Errc::InvalidArgument, "alpha must exceed 1");
  if (seqs.empty()) throw Error(Errc::NoSurvivors, "no replicas");
  const int d = static_cast<int>(seqs.front().start.size());
  const int L = seqs.front().L;

  // s, s tau, s tau^alpha, s X (d), sum X-bar (d), sum tau-bar
  const Eigen::Index cols = 3 + 2 * d + 1;
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seqs.size()), cols);
  std::int64_t survivors = 0;
  std::int64_t origin = 0;
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto& s = seqs[r];
    if (s.L != L) throw Error(Errc::InvalidArgument, "sequences mix block lengths");
    const auto i = static_cast<Eigen::Index>(r);
    if (s.origin_survived) ++origin;
    if (s.taus.empty()) continue;
    const BlockSeries b = extract_blocks(s, kappa);
    rows.row(i).segment(3 + d, d) = b.scaled_displacements.rowwise().sum();
    rows(i, 3 + 2 * d) = b.scaled_durations.sum();
    if (!s.origin_survived) continue;
    ++survivors;
    const double t1 = b.scaled_durations(0);
    rows(i, 0) = 1.0;
    rows(i, 1) = t1;
    rows(i, 2) = std::pow(t1, alpha);
    rows.row(i).segment(3, d) = b.scaled_displacements.col(0);
  }
  if (survivors == 0) throw Error(Errc::NoSurvivors, "no replica survived in its cone");

  auto stat = [d](const Eigen::VectorXd& s) {
    Eigen::VectorXd out(2 + 3 * d);
    const double beta = s(1) / s(0);
    const Eigen::VectorXd gamma = s.segment(3, d) / s(0);
    const Eigen::VectorXd v = s.segment(3 + d, d) / s(3 + 2 * d);
    out(0) = s(2) / s(0);
    out(1) = beta;
    out.segment(2, d) = gamma;
    out.segment(2 + d, d) = v;
    out.segment(2 + 2 * d, d) = gamma - beta * v;
    return out;
  };
  const auto [value, se] = jackknife(rows, stat);

  MomentReport rep;
  rep.L = L;
  rep.alpha = alpha;
  rep.kappa = kappa;
  rep.n_replicas = static_cast<std::int64_t>(seqs.size());
  rep.n_survivors = survivors;
  rep.M_hat = value(0);
  rep.M_se = se(0);
  rep.beta_hat = value(1);
  rep.beta_se = se(1);
  rep.gamma_hat = value.segment(2, d);
  rep.gamma_se = se.segment(2, d);
  rep.v_hat = value.segment(2 + d, d);
  rep.identity_residual = value.segment(2 + 2 * d, d);
  rep.identity_se = se.segment(2 + 2 * d, d);
  rep.p_D_survive = static_cast<double>(origin) / static_cast<double>(seqs.size());
  rep.phi_L = phi_L;
  rep.phi_prime_L = phi_prime(phi_L, rep.p_D_survive);
  const double alpha_dual = alpha / (alpha - 1.0);
  rep.product = std::pow(rep.phi_prime_L, 1.0 / alpha_dual) * std::pow(rep.M_hat, 1.0 / alpha);
  rep.eta_L = 2.0 * rep.product;
  return rep;
}

void check_region(const std::vector<Site>& U) {
  if (U.empty()) throw Error(Errc::BadRegion, "region is empty");
  const auto d = U.front().size();
  std::map<std::vector<int>, bool> seen;
  bool has_origin = false;
  for (const auto& x : U) {
    if (x.size() != d) throw Error(Errc::BadRegion, "region mixes dimensions");
    seen[std::vector<int>(x.data(), x.data() + d)] = false;
    if ((x.array() == 0).all()) has_origin = true;
  }
  if (!has_origin) throw Error(Errc::BadRegion, "region must contain the origin");
  std::deque<std::vector<int>> queue{std::vector<int>(d, 0)};
  seen[queue.front()] = true;
  std::size_t reached = 1;
  while (!queue.empty()) {
    auto x = queue.front();
    queue.pop_front();
    for (Eigen::Index a = 0; a < d; ++a)
      for (int s : {1, -1}) {
        auto y = x;
        y[a] += s;
        auto it = seen.find(y);
        if (it != seen.end() && !it->second) {
          it->second = true;
          ++reached;
          queue.push_back(std::move(y));
        }
      }
  }
  if (reached != seen.size()) throw Error(Errc::BadRegion, "region is not connected");
}

KalikowReplica kalikow_replica(const EnvironmentModel& model, const Direction& dir,
                               const std::vector<Site>& U, std::uint64_t seed,
                               std::uint64_t replica) {
  const int d = model.dim();
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t i = 0; i < U.size(); ++i) index[std::vector<int>(U[i].data(), U[i].data() + d)] = i;

  const EnvironmentModel env = model.with_seed(derive_seed(seed, {kEnvSalt, replica}));
  Walker w(env, dir, 0.0, WalkMode::Quenched, Site::Zero(d), derive_seed(seed, {kWalkSalt, replica}));
  KalikowReplica out;
  out.visits.assign(U.size(), 0);
  out.weight = Eigen::MatrixXd::Zero(2 * d, static_cast<Eigen::Index>(U.size()));
  constexpr std::int64_t kStepCap = 100'000'000;
  std::vector<int> key(d);
  for (;;) {
    for (int a = 0; a < d; ++a) key[a] = w.position()(a);
    auto it = index.find(key);
    if (it == index.end()) break;
    if (w.time() >= kStepCap) throw Error(Errc::PreconditionFailed, "walk does not leave the region");
    ++out.visits[it->second];
    out.weight.col(static_cast<Eigen::Index>(it->second)) += env.support()[w.kernel_index()].probs;
    w.step();
  }
  out.exit_time = w.time();
  return out;
}

KalikowEstimate kalikow_merge(const std::vector<Site>& U,
                              const std::vector<KalikowReplica>& replicas) {
  KalikowEstimate est;
  est.U = U;
  est.replicas = static_cast<std::int64_t>(replicas.size());
  if (replicas.empty()) return est;
  const Eigen::Index steps = replicas.front().weight.rows();
  const double n = static_cast<double>(replicas.size());
  for (std::size_t i = 0; i < U.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    std::int64_t visits = 0;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(steps);
    for (const auto& r : replicas) {
      visits += r.visits[i];
      num += r.weight.col(col);
    }
    if (visits == 0) continue;
    KalikowSite s;
    s.x = U[i];
    s.visits = visits;
    s.probs = num / static_cast<double>(visits);
    // Linearized ratio variance: residuals a_r - P b_r.
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(steps);
    for (const auto& r : replicas)
      ss += (r.weight.col(col) - s.probs * static_cast<double>(r.visits[i])).array().square().matrix();
    s.se = n > 1.0 ? Eigen::VectorXd((ss * (n / (n - 1.0))).array().sqrt() / static_cast<double>(visits))
                   : Eigen::VectorXd::Constant(steps, std::numeric_limits<double>::quiet_NaN());
    s.drift = local_drift(TransitionKernel(s.probs));
    est.sites.push_back(std::move(s));
  }
  return est;
}

KalikowEstimate kalikow_mc(const EnvironmentModel& model, const Direction& dir, double kappa,
                           const std::vector<Site>& U, std::int64_t replicas, std::uint64_t seed) {
  check_region(U);
  if (U.front().size() != model.dim()) throw Error(Errc::DimensionMismatch, "region and model dimension");
  if (replicas < 1) throw Error(Errc::InvalidArgument, "replicas must be >= 1");
  for (const auto& k : model.support())
    if (!kernel_validate(k, dir, kappa)) throw Error(Errc::KappaTooLarge, "support kernel is not elliptic with mass >= kappa on every ladder step");
  std::vector<KalikowReplica> reps;
  reps.reserve(static_cast<std::size_t>(replicas));
  for (std::int64_t r = 0; r < replicas; ++r)
    reps.push_back(kalikow_replica(model, dir, U, seed, static_cast<std::uint64_t>(r)));
  return kalikow_merge(U, reps);
}

double compute_lambda0(double delta, double ell_norm) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(Errc::InvalidArgument, "delta must lie in (0, 1]");
  if (!(ell_norm >= 1.0)) throw Error(Errc::InvalidArgument, "|ell| must be >= 1");
  const double c = 3.0 * ell_norm + 2.0;
  // u^{-2}(e^u - 1 - u) is increasing, so the max sits at u = a = lambda0 c and the
  // condition reads (e^a - 1 - a) / a <= delta / c.
  auto lhs = [](double a) { return (std::expm1(a) - a) / a; };
  const double target = delta / c;
  double lo = 0.0;
  double hi = 1.0;
  while (lhs(hi) <= target) hi *= 2.0;
  while ((hi - lo) / c > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    (lhs(mid) <= target ? lo : hi) = mid;
  }
  return lo / c;
}

std::vector<Site> cone_witnesses(const Direction& dir, double zeta, int radius) {
  const int d = dir.dim();
  const Cone cone(Site::Zero(d), dir, zeta);
  std::vector<Site> out;
  Site y = Site::Constant(d, -radius);
  for (;;) {
    if (cone_contains(cone, y)) out.push_back(y);
    int a = 0;
    while (a < d && y(a) == radius) y(a++) = -radius;
    if (a == d) break;
    ++y(a);
  }
  return out;
}

bool one_step_supermartingale_check(const TransitionKernel& k, const Direction& dir, double zeta,
                                    double delta, double lambda,
                                    const std::vector<Site>& witnesses) {
  if (k.dim() != dir.dim()) throw Error(Errc::DimensionMismatch, "kernel and direction dimension");
  const std::vector<Site> own = witnesses.empty() ? cone_witnesses(dir, zeta) : std::vector<Site>{};
  const auto& ys = witnesses.empty() ? own : witnesses;
  const Cone cone(Site::Zero(dir.dim()), dir, zeta);
  for (const auto& y : ys) {
    const double fy = cone_margin(cone, y);
    double sum = 0.0;
    for (int s = 0; s < 2 * dir.dim(); ++s) {
      Site z = y;
      z(step_axis(s)) += step_sign(s);
      sum += k.probs(s) * std::exp(-3.0 * lambda * (cone_margin(cone, z) - fy) + lambda * delta);
    }
    if (sum > 1.0 + 1e-12) return false;
  }
  return true;
}

std::optional<std::int64_t> level_hitting_time(const EnvironmentModel& model, const Direction& dir,
                                               double kappa, double r, std::int64_t horizon,
                                               std::uint64_t seed, std::uint64_t replica) {
  const EnvironmentModel env = model.with_seed(derive_seed(seed, {kEnvSalt, replica}));
  Walker w(env, dir, kappa, WalkMode::Coupled, Site::Zero(dir.dim()),
           derive_seed(seed, {kWalkSalt, replica}));
  if (0.0 >= r) return 0;
  while (w.time() < horizon) {
    w.step();
    if (static_cast<double>(level(w.position(), dir.ell())) >= r) return w.time();
  }
  return std::nullopt;
}

void check_exit_moment_preconditions(const EnvironmentModel& model, const Direction& dir,
                                     double kappa, double delta, double lambda) {
  if (!check_non_nestling(model, dir, delta))
    throw Error(Errc::PreconditionFailed, "model is not non-nestling at delta");
  if (!(delta > 2.0 * kappa)) throw Error(Errc::PreconditionFailed, "need delta > 2 kappa");
  if (!(lambda > 0.0) || lambda > compute_lambda0(delta, dir.norm()) + 1e-12)
    throw Error(Errc::PreconditionFailed, "need 0 < lambda <= lambda0");
}

ExitMomentReport summarize_exit_moments(double r, double delta, double lambda, std::int64_t horizon,
                                        const std::vector<std::optional<std::int64_t>>& times) {
  if (times.size() < 2 || horizon < 1) throw Error(Errc::InvalidArgument, "need replicas >= 2, horizon >= 1");
  ExitMomentReport rep;
  rep.r = r;
  rep.lambda = lambda;
  rep.delta = delta;
  rep.replicas = static_cast<std::int64_t>(times.size());
  rep.bound = std::exp(3.0 * lambda * r);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& t : times) {
    if (!t) ++rep.not_exited;
    const double v = std::exp(lambda * delta * static_cast<double>(t.value_or(horizon)));
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(times.size());
  rep.estimate = sum / n;
  rep.se = std::sqrt(std::max(0.0, (sum_sq - n * rep.estimate * rep.estimate) / (n - 1.0)) / n);
  rep.passes = rep.estimate - 3.0 * rep.se <= rep.bound;
  return rep;
}

ExitMomentReport exit_moment_check(const EnvironmentModel& model, const Direction& dir,
                                   double kappa, double delta, double lambda, double r,
                                   std::int64_t replicas, std::int64_t horizon, std::uint64_t seed) {
  check_exit_moment_preconditions(model, dir, kappa, delta, lambda);
  if (replicas < 2 || horizon < 1) throw Error(Errc::InvalidArgument, "need replicas >= 2, horizon >= 1");
  std::vector<std::optional<std::int64_t>> times;
  times.reserve(static_cast<std::size_t>(replicas));
  for (std::int64_t i = 0; i < replicas; ++i)
    times.push_back(level_hitting_time(model, dir, kappa, r, horizon, seed, static_cast<std::uint64_t>(i)));
  return summarize_exit_moments(r, delta, lambda, horizon, times);
}

std::vector<MixingPoint> cone_mixing_probe(const EnvironmentModel& model, const Direction& dir,
                                           double zeta, const std::vector<int>& r_values,
                                           const std::vector<EventPair>& events,
                                           std::int64_t samples, std::uint64_t seed) {
  if (events.empty() || samples < 2) throw Error(Errc::InvalidArgument, "need events and samples");
  const int d = dir.dim();
  const Cone apex(Site::Zero(d), dir, zeta);
  auto check_event = [&](const CylinderEvent& e) {
    if (e.sites.empty() || e.sites.size() != e.values.size())
      throw Error(Errc::InvalidArgument, "cylinder event needs one value per site");
    for (std::size_t v : e.values)
      if (v >= model.support().size()) throw Error(Errc::InvalidArgument, "value outside the support");
  };
  for (const auto& p : events) {
    check_event(p.A);
    check_event(p.B);
    for (const auto& z : p.A.sites)
      if (level(z, dir.ell()) > 0) throw Error(Errc::InvalidArgument, "A must live on {z . ell <= 0}");
    for (const auto& z : p.B.sites)
      if (!cone_contains(apex, z)) throw Error(Errc::InvalidArgument, "B must live in the cone");
  }
  auto holds = [](const EnvironmentModel& env, const CylinderEvent& e, const Site& shift) {
    for (std::size_t i = 0; i < e.sites.size(); ++i)
      if (env.kernel_index_at(Site(e.sites[i] + shift)) != e.values[i]) return false;
    return true;
  };

  std::vector<MixingPoint> out;
  const double n = static_cast<double>(samples);
  for (int r : r_values) {
    MixingPoint pt;
    pt.r = r;
    const Site vertex = r * dir.ell();
    for (const auto& p : events) {
      std::int64_t nA = 0, nB = 0, nAB = 0;
      for (std::int64_t i = 0; i < samples; ++i) {
        const EnvironmentModel env = model.with_seed(derive_seed(seed, {kEnvSalt, static_cast<std::uint64_t>(i)}));
        const bool a = holds(env, p.A, Site::Zero(d));
        const bool b = holds(env, p.B, vertex);
        nA += a;
        nB += b;
        nAB += a && b;
      }
      const double pA = static_cast<double>(nA) / n;
      if (pA < 0.05) throw Error(Errc::DegenerateEvent, "P(A) below 0.05");
      const double pBA = static_cast<double>(nAB) / static_cast<double>(nA);
      const double pB = static_cast<double>(nB) / n;
      const double phi = std::abs(pBA - pB);
      const double se = std::sqrt(pBA * (1.0 - pBA) / static_cast<double>(nA) + pB * (1.0 - pB) / n);
      if (pt.per_pair.empty() || phi > pt.phi_hat) {
        pt.phi_hat = phi;
        pt.se = se;
      }
      pt.per_pair.push_back(phi);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace rwre
