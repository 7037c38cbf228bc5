#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"
#include "rwre/kernel.hpp"
#include "rwre/random.hpp"

namespace rwre {

enum class WalkMode { Quenched, Coupled };

/// X_0..X_N as the columns of a d x (N + 1) matrix, plus the epsilon marks
/// eps_1..eps_N (empty for quenched walks). marks[n] drives the step n -> n + 1.
struct WalkRecord {
  Site start;
  Eigen::MatrixXi positions;
  std::vector<Mark> marks;
  std::int64_t horizon = 0;

  int dim() const noexcept { return static_cast<int>(positions.rows()); }
  auto position(std::int64_t n) const { return positions.col(n); }

  /// Builds a record from explicit data. Throws InvalidArgument unless every
  /// step is nearest-neighbor and every forced mark agrees with its step.
  static WalkRecord from_path(Eigen::MatrixXi positions, std::vector<Mark> marks = {});
};

/// Incremental walker on one environment realization.
///
/// Coupled mode draws the mark first (Q(e) = kappa for e in E) and then the
/// step from coupled_step_distribution; quenched mode draws the step directly.
class Walker {
 public:
  Walker(const EnvironmentModel& model, const Direction& dir, double kappa, WalkMode mode,
         Site start, std::uint64_t seed);

  /// Advances one step and returns its step index.
  int step();

  const Site& position() const noexcept { return x_; }
  std::int64_t time() const noexcept { return n_; }
  Mark last_mark() const noexcept { return mark_; }
  std::size_t kernel_index() { return cursor_.index_at(x_); }
  WalkMode mode() const noexcept { return mode_; }

 private:
  static int sample(const std::vector<double>& cumulative, double u);

  EnvironmentCursor cursor_;
  WalkMode mode_;
  Stream rng_;
  Site x_;
  std::int64_t n_ = 0;
  Mark mark_ = kFreeMark;
  std::vector<std::vector<double>> quenched_cdf_;
  std::vector<std::vector<double>> free_cdf_;
  std::vector<double> mark_cdf_;
  std::vector<int> alphabet_;
};

/// Runs `horizon` steps from `start`. Throws KappaTooLarge in coupled mode when
/// some support kernel puts less than kappa on a step of E.
WalkRecord simulate(const EnvironmentModel& model, const Direction& dir, double kappa,
                    const Site& start, std::int64_t horizon, WalkMode mode, std::uint64_t seed);

using Region = std::function<bool(Eigen::Ref<const Eigen::VectorXi>)>;

/// min{n >= 0 : X_n not in region}, or nullopt when the walk stays inside.
std::optional<std::int64_t> exit_time(const WalkRecord& rec, const Region& region);

/// Rows "n,x1,...,xd,eps"; eps is +a / -a for a forced step along +-e_a, 0 otherwise.
void write_path_csv(const WalkRecord& rec, std::ostream& out);

}  // namespace rwre
