#pragma once

#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace rwre {

/// Nearest-neighbor Ising specification.
struct IsingParams {
  double beta = 0.0;
  double h = 0.0;
  int dim = 2;
  std::vector<int> box;  // extent per axis, used by the finite-box sampler
  int burn_in_sweeps = 1;
  int boundary = +1;     // spin held fixed outside the box
};

/// Throws InvalidArgument for beta < 0, dim < 1, sweeps < 1, boundary not +-1,
/// or (when `need_box`) a box of the wrong rank or with a nonpositive extent.
void validate(const IsingParams& params, bool need_box);

/// pi(sigma(x) = spin | neighbor sum S) = exp(spin (beta S + h)) / (exp(beta S + h) + exp(-(beta S + h))).
/// Throws InvalidNeighborSum unless S is in {-2d, -2d + 2, ..., 2d}.
double ising_spin_probability(const IsingParams& params, int neighbor_sum, int spin);

/// Probability of +1 given the neighbor sum.
inline double ising_conditional(const IsingParams& params, int neighbor_sum) {
  return ising_spin_probability(params, neighbor_sum, +1);
}

/// c(beta, h) = 2d max_S |pi(+|S) - pi(+|S - 2)|, S ranging over {-2d + 2, ..., 2d}.
double dobrushin_coefficient(const IsingParams& params);

/// Spins on a finite box, axis 0 varying fastest.
struct SpinField {
  std::vector<int> extent;
  std::vector<std::int8_t> spins;

  std::size_t size() const noexcept { return spins.size(); }
  std::size_t flat_index(const std::vector<int>& coord) const;
  std::vector<int> coord_of(std::size_t flat) const;
  int at(const std::vector<int>& coord) const { return spins[flat_index(coord)]; }
  double magnetization() const;
};

/// burn_in_sweeps checkerboard-ordered systematic scans of heat-bath updates,
/// started from all +1 with the boundary fixed. Deterministic in `seed`.
SpinField glauber_sample(const IsingParams& params, std::uint64_t seed);

/// CSV rows "x1,...,xd,spin" in flat order.
void write_spin_csv(const SpinField& field, std::ostream& out);

/// Infinite-lattice version of the same dynamics: every site starts at +1 and
/// receives one counter-keyed uniform per sweep, so the spin at z after T
/// sweeps depends only on the uniforms within graph distance 2T of z. Spins
/// are evaluated lazily tile by tile with a halo wide enough that each tile is
/// exact; `spin_exact` recomputes a single site from its light cone.
class LazyIsingField {
 public:
  LazyIsingField(const IsingParams& params, std::uint64_t seed);

  int spin_at(Eigen::Ref<const Eigen::VectorXi> site);

  static int spin_exact(const IsingParams& params, std::uint64_t seed,
                        const Eigen::VectorXi& site);

  std::size_t tiles_computed() const noexcept { return tiles_.size(); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<int>& key) const noexcept;
  };

  const std::vector<std::int8_t>& tile(const std::vector<int>& key);

  IsingParams params_;
  std::uint64_t seed_;
  int tile_side_;
  int halo_;
  std::unordered_map<std::vector<int>, std::vector<std::int8_t>, KeyHash> tiles_;
  std::vector<int> last_key_;
  const std::vector<std::int8_t>* last_tile_ = nullptr;
};

}  // namespace rwre
