#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "rwre/error.hpp"

namespace rwre {

/// A lattice point of Z^d.
using Site = Eigen::VectorXi;

// Unit steps are indexed 0..2d-1: step 2i is +e_i, step 2i+1 is -e_i.
constexpr int step_index(int axis, int sign) noexcept { return 2 * axis + (sign < 0 ? 1 : 0); }
constexpr int step_axis(int step) noexcept { return step / 2; }
constexpr int step_sign(int step) noexcept { return (step % 2 == 0) ? 1 : -1; }

/// Integer direction ell together with its step alphabet and ladder path.
///
/// The ladder takes all sgn(ell_a) e_a steps for the leading axis first, then
/// the next axis, and so on. The leading axis is the first one with a nonzero
/// coordinate; `axis_order()` records that permutation. Every query takes and
/// returns sites in the caller's original coordinates.
class Direction {
 public:
  int dim() const noexcept { return static_cast<int>(ell_.size()); }
  const Eigen::VectorXi& ell() const noexcept { return ell_; }
  std::int64_t l1() const noexcept { return l1_; }
  std::int64_t norm_sq() const noexcept { return norm_sq_; }
  double norm() const noexcept { return std::sqrt(static_cast<double>(norm_sq_)); }
  double zeta() const noexcept { return zeta_; }

  /// E = {sgn(ell_i) e_i} minus zero, as step indices in ladder order.
  const std::vector<int>& step_alphabet() const noexcept { return alphabet_; }
  /// The ladder of length |ell|_1; its steps sum to ell.
  const std::vector<int>& ladder() const noexcept { return ladder_; }
  /// Entry i of the repeated ladder of any length L in |ell|_1 N.
  int ladder_step(std::size_t i) const noexcept { return ladder_[i % ladder_.size()]; }
  const std::vector<int>& axis_order() const noexcept { return axis_order_; }

  bool in_alphabet(int step) const noexcept {
    for (int s : alphabet_)
      if (s == step) return true;
    return false;
  }

 private:
  friend Direction make_direction(const Eigen::VectorXi& ell, double zeta);

  Eigen::VectorXi ell_;
  std::int64_t l1_ = 0;
  std::int64_t norm_sq_ = 0;
  double zeta_ = 0.0;
  std::vector<int> alphabet_;
  std::vector<int> ladder_;
  std::vector<int> axis_order_;
};

/// Builds the direction and checks that every partial sum of the ladder lies
/// in C(0, ell, zeta). Throws ZeroDirection or ZetaTooLarge.
Direction make_direction(const Eigen::VectorXi& ell, double zeta);

namespace detail {

// v . ell >= zeta |v| |ell|, squared on the nonnegative side so that boundary
// lattice points are decided without rounding in the integer terms.
template <typename Derived>
bool in_cone_displacement(const Eigen::MatrixBase<Derived>& v, const Eigen::VectorXi& ell,
                          std::int64_t ell_sq, double zeta) {
  std::int64_t dot = 0;
  std::int64_t v_sq = 0;
  for (Eigen::Index i = 0; i < ell.size(); ++i) {
    const std::int64_t vi = v(i);
    dot += vi * ell(i);
    v_sq += vi * vi;
  }
  if (dot < 0) return false;
  if (zeta == 0.0) return true;
  const long double lhs = static_cast<long double>(dot) * static_cast<long double>(dot);
  const long double z = zeta;
  return lhs >= z * z * static_cast<long double>(v_sq) * static_cast<long double>(ell_sq);
}

template <typename Derived>
double margin_displacement(const Eigen::MatrixBase<Derived>& v, const Eigen::VectorXi& ell,
                           std::int64_t ell_sq, double zeta) {
  std::int64_t dot = 0;
  std::int64_t v_sq = 0;
  for (Eigen::Index i = 0; i < ell.size(); ++i) {
    const std::int64_t vi = v(i);
    dot += vi * ell(i);
    v_sq += vi * vi;
  }
  return static_cast<double>(dot) -
         zeta * std::sqrt(static_cast<double>(v_sq)) * std::sqrt(static_cast<double>(ell_sq));
}

}  // namespace detail

/// C(x, ell, zeta) = { y : (y - x) . ell >= zeta |y - x| |ell| }.
struct Cone {
  Cone(Site vertex, const Direction& dir, double zeta)
      : vertex(std::move(vertex)), ell(dir.ell()), ell_sq(dir.norm_sq()), zeta(zeta) {
    if (this->vertex.size() != ell.size())
      throw Error(Errc::DimensionMismatch, "cone vertex and direction differ in dimension");
  }

  Site vertex;
  Eigen::VectorXi ell;
  std::int64_t ell_sq;
  double zeta;
};

template <typename Derived>
bool cone_contains(const Cone& cone, const Eigen::MatrixBase<Derived>& y) {
  if (y.size() != cone.vertex.size())
    throw Error(Errc::DimensionMismatch, "point and cone differ in dimension");
  return detail::in_cone_displacement(y - cone.vertex, cone.ell, cone.ell_sq, cone.zeta);
}

/// f(y - x) = (y - x) . ell - zeta |y - x| |ell|; nonnegative exactly on the cone.
template <typename Derived>
double cone_margin(const Cone& cone, const Eigen::MatrixBase<Derived>& y) {
  if (y.size() != cone.vertex.size())
    throw Error(Errc::DimensionMismatch, "point and cone differ in dimension");
  return detail::margin_displacement(y - cone.vertex, cone.ell, cone.ell_sq, cone.zeta);
}

/// Integer dot product y . ell.
template <typename Derived>
std::int64_t level(const Eigen::MatrixBase<Derived>& y, const Eigen::VectorXi& ell) {
  std::int64_t dot = 0;
  for (Eigen::Index i = 0; i < ell.size(); ++i) dot += static_cast<std::int64_t>(y(i)) * ell(i);
  return dot;
}

/// The unit vector for a step index in dimension d.
Site unit_step(int dim, int step);

}  // namespace rwre
