#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rwre/geometry.hpp"
#include "rwre/stats.hpp"
#include "rwre/walker.hpp"

namespace rwre {

struct FreshPoint {
  std::int64_t time;
  Site position;
};

/// Times s with X_n . ell < X_s . ell for all n < s, including s = 0.
std::vector<FreshPoint> fresh_times(const WalkRecord& rec, const Direction& dir);

/// First cone exit after a time shift, answered in O(log N) amortized per
/// query through a tree of per-range level minima and bounding boxes.
class ConeScanner {
 public:
  ConeScanner(const WalkRecord& rec, const Direction& dir, double zeta);

  /// Smallest t >= 0 with X_{s+t} outside C(X_s, ell, zeta); nullopt if none up to the horizon.
  std::optional<std::int64_t> first_exit(std::int64_t s) const;

  std::int64_t level(std::int64_t n) const { return levels_[n]; }

 private:
  bool certified_inside(std::size_t node, const Eigen::VectorXi& x, std::int64_t lvl) const;
  std::optional<std::int64_t> descend(std::size_t node, std::int64_t lo, std::int64_t hi,
                                      std::int64_t from, const Eigen::VectorXi& x,
                                      std::int64_t lvl) const;

  const WalkRecord* rec_;
  Eigen::VectorXi ell_;
  std::int64_t ell_sq_;
  double zeta_;
  std::int64_t size_ = 1;  // leaves, a power of two
  std::vector<std::int64_t> levels_;
  std::vector<std::int64_t> min_level_;
  Eigen::MatrixXi box_lo_;
  Eigen::MatrixXi box_hi_;
};

/// D' after shifting to `from_time`; nullopt means the path survived to the horizon.
std::optional<std::int64_t> detect_cone_exit(const WalkRecord& rec, std::int64_t from_time,
                                             const Direction& dir, double zeta);

struct RegenOptions {
  /// A candidate that survives to the horizon counts as D' = infinity only if it
  /// was watched for at least this many steps; otherwise it is censored.
  std::int64_t survival_window = 0;
};

struct RegenSequence {
  int L = 0;
  std::vector<std::int64_t> taus;
  std::vector<Site> positions;
  /// S-bar attempts behind each tau_k; attempts.front() is K.
  std::vector<int> attempts;
  bool censored_tail = false;
  bool origin_survived = false;
  Site start;
  Site end;
  std::int64_t horizon = 0;

  std::optional<int> K() const {
    return attempts.empty() ? std::nullopt : std::optional<int>(attempts.front());
  }
};

/// The S-bar / R-bar ladder and the tau_k recursion.
///
/// A candidate is a time n >= L (relative to the current shift) whose
/// X_{n-L} . ell is a strict record of the shifted path and whose marks
/// eps_{n-L+1..n} spell the ladder. Throws BadBlockLength unless L is a
/// positive multiple of |ell|_1, PreconditionFailed for a quenched record.
RegenSequence detect_regenerations(const WalkRecord& rec, const Direction& dir, double zeta, int L,
                                   double kappa, const RegenOptions& options = {});

/// Same, reusing a scanner built for (rec, dir, zeta).
RegenSequence detect_regenerations(const WalkRecord& rec, const ConeScanner& scanner,
                                   const Direction& dir, int L, const RegenOptions& options = {});

struct BlockSeries {
  int L = 0;
  double kappa = 0.0;
  Eigen::VectorXd scaled_durations;     // kappa^L (tau_k - tau_{k-1})
  Eigen::MatrixXd scaled_displacements; // d x count, kappa^L (X_{tau_k} - X_{tau_{k-1}})
  Eigen::VectorXd final_displacement;   // X_N - X_0
  std::int64_t horizon = 0;
  bool censored = false;

  Eigen::Index count() const noexcept { return scaled_durations.size(); }
};

/// Throws EmptySequence when no tau was detected.
BlockSeries extract_blocks(const RegenSequence& seq, double kappa);

struct KTail {
  std::int64_t n = 0;
  std::vector<double> survival;       // P(K >= k), k = 1..kmax (+1 trailing zero)
  std::vector<Interval> survival_ci;
  std::vector<double> ratios;         // P(K >= k + 1) / P(K >= k)
  std::vector<Interval> ratio_ci;
};

/// Empirical tail of K with Wilson intervals at `z`. Sequences without a tau are skipped.
KTail k_tail(const std::vector<RegenSequence>& seqs, double z = 1.96);
KTail k_tail(const std::vector<int>& k_values, double z = 1.96);

/// Maximal coupling in split form: with prob. 1 - a both draw the shared Y,
/// with prob. a they draw the residuals Z and Z-tilde independently.
struct SplitCoupling {
  double a = 0.0;
  Eigen::VectorXd shared;      // Y = min(p, q) / (1 - a)
  Eigen::VectorXd residual_p;  // Z
  Eigen::VectorXd residual_q;  // Z-tilde
  Eigen::MatrixXd joint_same;  // P(X-bar = i, X-tilde = j, Delta = 0)
  Eigen::MatrixXd joint_split; // P(X-bar = i, X-tilde = j, Delta = 1)

  Eigen::MatrixXd joint() const { return joint_same + joint_split; }
};

/// Throws SupportMismatch for differing supports, InvalidLaw for non-laws.
SplitCoupling split_couple(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace rwre
