#include "rwre/regeneration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rwre {

std::vector<FreshPoint> fresh_times(const WalkRecord& rec, const Direction& dir) {
  std::vector<FreshPoint> out;
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  for (std::int64_t n = 0; n <= rec.horizon; ++n) {
    const std::int64_t lvl = level(rec.position(n), dir.ell());
    if (n == 0 || lvl > best) {
      out.push_back({n, rec.position(n)});
      best = lvl;
    }
  }
  return out;
}

ConeScanner::ConeScanner(const WalkRecord& rec, const Direction& dir, double zeta)
    : rec_(&rec), ell_(dir.ell()), ell_sq_(dir.norm_sq()), zeta_(zeta) {
  if (rec.dim() != dir.dim()) throw Error(Errc::DimensionMismatch, "walk and direction dimension");
  if (!(zeta >= 0.0 && zeta < 1.0)) throw Error(Errc::InvalidArgument, "zeta must lie in [0, 1)");
  const std::int64_t points = rec.horizon + 1;
  while (size_ < points) size_ *= 2;
  const int d = rec.dim();
  levels_.resize(points);
  min_level_.assign(2 * size_, std::numeric_limits<std::int64_t>::max());
  box_lo_ = Eigen::MatrixXi::Constant(d, 2 * size_, std::numeric_limits<int>::max());
  box_hi_ = Eigen::MatrixXi::Constant(d, 2 * size_, std::numeric_limits<int>::min());
  for (std::int64_t n = 0; n < points; ++n) {
    levels_[n] = rwre::level(rec.position(n), ell_);
    min_level_[size_ + n] = levels_[n];
    box_lo_.col(size_ + n) = rec.position(n);
    box_hi_.col(size_ + n) = rec.position(n);
  }
  for (std::int64_t v = size_ - 1; v >= 1; --v) {
    min_level_[v] = std::min(min_level_[2 * v], min_level_[2 * v + 1]);
    box_lo_.col(v) = box_lo_.col(2 * v).cwiseMin(box_lo_.col(2 * v + 1));
    box_hi_.col(v) = box_hi_.col(2 * v).cwiseMax(box_hi_.col(2 * v + 1));
  }
}

bool ConeScanner::certified_inside(std::size_t node, const Eigen::VectorXi& x,
                                   std::int64_t lvl) const {
  if (min_level_[node] == std::numeric_limits<std::int64_t>::max()) return true;
  const std::int64_t dot_lb = min_level_[node] - lvl;
  if (dot_lb < 0) return false;
  if (zeta_ == 0.0) return true;
  double far_sq = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(static_cast<double>(box_lo_(i, node)) - x(i));
    const double b = std::abs(static_cast<double>(box_hi_(i, node)) - x(i));
    const double m = std::max(a, b);
    far_sq += m * m;
  }
  const double bound = zeta_ * std::sqrt(static_cast<double>(ell_sq_) * far_sq);
  return static_cast<double>(dot_lb) > bound * (1.0 + 1e-12) + 1e-9;
}

std::optional<std::int64_t> ConeScanner::descend(std::size_t node, std::int64_t lo, std::int64_t hi,
                                                 std::int64_t from, const Eigen::VectorXi& x,
                                                 std::int64_t lvl) const {
  if (hi < from) return std::nullopt;
  if (lo >= from && certified_inside(node, x, lvl)) return std::nullopt;
  if (lo == hi) {
    if (lo > rec_->horizon) return std::nullopt;
    const Eigen::VectorXi v = rec_->position(lo) - x;
    if (!detail::in_cone_displacement(v, ell_, ell_sq_, zeta_)) return lo;
    return std::nullopt;
  }
  const std::int64_t mid = lo + (hi - lo) / 2;
  if (auto t = descend(2 * node, lo, mid, from, x, lvl)) return t;
  return descend(2 * node + 1, mid + 1, hi, from, x, lvl);
}

std::optional<std::int64_t> ConeScanner::first_exit(std::int64_t s) const {
  if (s < 0 || s > rec_->horizon) throw Error(Errc::InvalidArgument, "shift outside the record");
  const Eigen::VectorXi x = rec_->position(s);
  if (auto t = descend(1, 0, size_ - 1, s + 1, x, levels_[s])) return *t - s;
  return std::nullopt;
}

std::optional<std::int64_t> detect_cone_exit(const WalkRecord& rec, std::int64_t from_time,
                                             const Direction& dir, double zeta) {
  if (from_time < 0 || from_time > rec.horizon)
    throw Error(Errc::InvalidArgument, "from_time outside the record");
  const Cone cone(rec.position(from_time), dir, zeta);
  for (std::int64_t n = from_time + 1; n <= rec.horizon; ++n)
    if (!cone_contains(cone, rec.position(n))) return n - from_time;
  return std::nullopt;
}

RegenSequence detect_regenerations(const WalkRecord& rec, const Direction& dir, double zeta, int L,
                                   double kappa, const RegenOptions& options) {
  const double n_alpha = static_cast<double>(dir.step_alphabet().size());
  if (!(kappa > 0.0) || !(kappa * n_alpha < 1.0))
    throw Error(Errc::KappaTooLarge, "kappa |E| must lie in (0, 1)");
  const ConeScanner scanner(rec, dir, zeta);
  return detect_regenerations(rec, scanner, dir, L, options);
}

RegenSequence detect_regenerations(const WalkRecord& rec, const ConeScanner& scanner,
                                   const Direction& dir, int L, const RegenOptions& options) {
  if (L < 1 || L % dir.l1() != 0)
    throw Error(Errc::BadBlockLength, "L must be a positive multiple of |ell|_1");
  if (static_cast<std::int64_t>(rec.marks.size()) != rec.horizon)
    throw Error(Errc::PreconditionFailed, "regeneration needs a coupled walk record");

  const std::int64_t N = rec.horizon;
  const std::int64_t window = options.survival_window;
  RegenSequence seq;
  seq.L = L;
  seq.start = rec.position(0);
  seq.end = rec.position(N);
  seq.horizon = N;
  seq.origin_survived = N >= window && !scanner.first_exit(0).has_value();

  auto ladder_follows = [&](std::int64_t j) {
    for (int i = 0; i < L; ++i)
      if (rec.marks[j + i] != dir.ladder_step(i)) return false;
    return true;
  };

  std::int64_t cur = L;  // smallest admissible n
  std::int64_t folded = 0;
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  int attempts = 0;
  for (;;) {
    std::int64_t n = cur;
    bool found = false;
    for (; n <= N; ++n) {
      const std::int64_t j = n - L;
      while (folded < j) best = std::max(best, scanner.level(folded++));
      if (scanner.level(j) > best && ladder_follows(j)) {
        found = true;
        break;
      }
    }
    if (!found) {
      if (seq.taus.empty()) seq.censored_tail = true;
      break;
    }
    ++attempts;
    if (auto exit = scanner.first_exit(n)) {
      cur = n + *exit;
      continue;
    }
    if (N - n < window) {
      seq.censored_tail = true;
      break;
    }
    seq.taus.push_back(n);
    seq.positions.push_back(rec.position(n));
    seq.attempts.push_back(attempts);
    attempts = 0;
    folded = n;
    best = std::numeric_limits<std::int64_t>::min();
    cur = n + L;
  }
  return seq;
}

BlockSeries extract_blocks(const RegenSequence& seq, double kappa) {
  if (seq.taus.empty()) throw Error(Errc::EmptySequence, "no regeneration detected");
  const auto count = static_cast<Eigen::Index>(seq.taus.size());
  const int d = static_cast<int>(seq.start.size());
  const double scale = std::pow(kappa, seq.L);
  BlockSeries b;
  b.L = seq.L;
  b.kappa = kappa;
  b.scaled_durations.resize(count);
  b.scaled_displacements.resize(d, count);
  std::int64_t prev_t = 0;
  Site prev_x = seq.start;
  for (Eigen::Index k = 0; k < count; ++k) {
    b.scaled_durations(k) = scale * static_cast<double>(seq.taus[k] - prev_t);
    b.scaled_displacements.col(k) = scale * (seq.positions[k] - prev_x).cast<double>();
    prev_t = seq.taus[k];
    prev_x = seq.positions[k];
  }
  b.final_displacement = (seq.end - seq.start).cast<double>();
  b.horizon = seq.horizon;
  b.censored = seq.censored_tail;
  return b;
}

KTail k_tail(const std::vector<int>& k_values, double z) {
  KTail out;
  out.n = static_cast<std::int64_t>(k_values.size());
  if (k_values.empty()) return out;
  const int kmax = *std::max_element(k_values.begin(), k_values.end());
  std::vector<std::int64_t> at_least(kmax + 2, 0);
  for (int k : k_values) {
    if (k < 1) throw Error(Errc::InvalidArgument, "K must be >= 1");
    for (int j = 1; j <= k; ++j) ++at_least[j];
  }
  const double n = static_cast<double>(out.n);
  for (int k = 1; k <= kmax + 1; ++k) {
    out.survival.push_back(static_cast<double>(at_least[k]) / n);
    out.survival_ci.push_back(wilson_interval(static_cast<double>(at_least[k]), n, z));
  }
  for (int k = 1; k <= kmax; ++k) {
    const double base = static_cast<double>(at_least[k]);
    out.ratios.push_back(static_cast<double>(at_least[k + 1]) / base);
    out.ratio_ci.push_back(wilson_interval(static_cast<double>(at_least[k + 1]), base, z));
  }
  return out;
}

KTail k_tail(const std::vector<RegenSequence>& seqs, double z) {
  std::vector<int> ks;
  for (const auto& s : seqs)
    if (auto k = s.K()) ks.push_back(*k);
  return k_tail(ks, z);
}

SplitCoupling split_couple(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0)
    throw Error(Errc::SupportMismatch, "laws must share a finite support");
  auto is_law = [](const Eigen::VectorXd& v) {
    return v.allFinite() && (v.array() >= 0.0).all() && std::abs(v.sum() - 1.0) <= kSumTolerance;
  };
  if (!is_law(p) || !is_law(q)) throw Error(Errc::InvalidLaw, "inputs must be probability vectors");

  SplitCoupling c;
  const Eigen::VectorXd m = p.cwiseMin(q);
  c.a = total_variation(p, q);
  c.shared = c.a < 1.0 ? Eigen::VectorXd(m / (1.0 - c.a)) : p;
  c.joint_same = m.asDiagonal();
  if (c.a > 0.0) {
    c.residual_p = (p - m) / c.a;
    c.residual_q = (q - m) / c.a;
    c.joint_split = (p - m) * (q - m).transpose() / c.a;
  } else {
    c.residual_p = p;
    c.residual_q = p;
    c.joint_split = Eigen::MatrixXd::Zero(p.size(), p.size());
  }
  return c;
}

}  // namespace rwre
