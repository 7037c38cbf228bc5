#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Core>

namespace rwre {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(double successes, double n, double z) {
  if (!(n > 0.0)) return {0.0, 1.0};
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Leave-one-row-out jackknife of a statistic of the column sums.
///
/// `rows` holds one row of additive sums per replica; `stat` maps a column-sum
/// vector to the estimate. Returns the full-sample estimate and its jackknife
/// standard error (NaN below two rows).
template <typename Stat>
std::pair<Eigen::VectorXd, Eigen::VectorXd> jackknife(const Eigen::MatrixXd& rows, Stat stat) {
  const Eigen::Index n = rows.rows();
  const Eigen::VectorXd total = rows.colwise().sum().transpose();
  Eigen::VectorXd full = stat(total);
  Eigen::VectorXd se = Eigen::VectorXd::Constant(full.size(), std::numeric_limits<double>::quiet_NaN());
  if (n < 2) return {full, se};
  Eigen::MatrixXd loo(n, full.size());
  for (Eigen::Index i = 0; i < n; ++i) loo.row(i) = stat(Eigen::VectorXd(total - rows.row(i).transpose())).transpose();
  const Eigen::RowVectorXd mean = loo.colwise().mean();
  const double factor = static_cast<double>(n - 1) / static_cast<double>(n);
  se = ((loo.rowwise() - mean).array().square().colwise().sum() * factor).sqrt().transpose();
  return {full, se};
}

}  // namespace rwre
