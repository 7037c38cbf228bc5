#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rwre/geometry.hpp"
#include "rwre/ising.hpp"
#include "rwre/kernel.hpp"

namespace rwre {

enum class EnvironmentKind { Homogeneous, Product, BlockIndependent, IsingTwoKernel };

std::string_view kind_name(EnvironmentKind kind) noexcept;

/// A random environment with a finite kernel support.
///
/// The kernel at z is a pure function of (master_seed, z, parameters):
///  - Homogeneous: kernels[0] everywhere.
///  - Product: an independent draw from `weights` at each site.
///  - BlockIndependent: one draw per cube of side `block_side`.
///  - IsingTwoKernel: kernels[0] (omega+) where the spin is +1, kernels[1] (omega-) otherwise.
class EnvironmentModel {
 public:
  static EnvironmentModel homogeneous(TransitionKernel kernel);
  static EnvironmentModel product(std::vector<TransitionKernel> kernels, std::vector<double> weights,
                                  std::uint64_t seed);
  static EnvironmentModel block_independent(std::vector<TransitionKernel> kernels,
                                            std::vector<double> weights, int block_side,
                                            std::uint64_t seed);
  static EnvironmentModel ising_two_kernel(IsingParams params, TransitionKernel omega_plus,
                                           TransitionKernel omega_minus, std::uint64_t seed);

  EnvironmentKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  std::uint64_t master_seed() const noexcept { return seed_; }
  const std::vector<TransitionKernel>& support() const noexcept { return kernels_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  int block_side() const noexcept { return block_side_; }
  const IsingParams& ising() const noexcept { return ising_; }

  /// Same parameters, different realization.
  EnvironmentModel with_seed(std::uint64_t seed) const;

  /// Index into `support()` of the kernel at z. For the Ising model this
  /// recomputes the spin from its light cone; walks use EnvironmentCursor.
  std::size_t kernel_index_at(const Eigen::VectorXi& z) const;
  const TransitionKernel& kernel_at(const Eigen::VectorXi& z) const {
    return kernels_[kernel_index_at(z)];
  }

 private:
  friend class EnvironmentCursor;
  EnvironmentModel() = default;
  void check();
  std::size_t draw_index(std::uint64_t key) const;

  EnvironmentKind kind_ = EnvironmentKind::Homogeneous;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<TransitionKernel> kernels_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  int block_side_ = 1;
  IsingParams ising_;
};

/// Single-owner view of one environment realization with lazily cached
/// Ising tiles. Agrees with `EnvironmentModel::kernel_index_at` everywhere.
class EnvironmentCursor {
 public:
  explicit EnvironmentCursor(const EnvironmentModel& model);

  std::size_t index_at(Eigen::Ref<const Eigen::VectorXi> z);
  const TransitionKernel& kernel_at(Eigen::Ref<const Eigen::VectorXi> z) {
    return model_->support()[index_at(z)];
  }
  const EnvironmentModel& model() const noexcept { return *model_; }

 private:
  const EnvironmentModel* model_;
  std::optional<LazyIsingField> field_;
};

/// True iff every kernel in the support has local_drift . ell >= delta, up to 1e-12 rounding.
bool check_non_nestling(const EnvironmentModel& model, const Direction& dir, double delta);

/// phi(r) = C exp(-gamma' r) with gamma' = gamma / sqrt(2).
double mixing_rate_bound(double gamma, double C, double r);

}  // namespace rwre
